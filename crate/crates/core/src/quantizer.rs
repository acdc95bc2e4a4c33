//! Scalar quantization of image coordinates onto a strided heatmap lattice.
//!
//! A coordinate `x` (input-image pixels) maps to the heatmap coordinate
//! `x / s`. Its integer part is the base cell, its fractional part `eps`
//! decides which of the two neighbouring cells receives the activation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Fractional parts this close to 1 are snapped to 0 with the base bumped.
pub const FRAC_SNAP: f64 = 1e-12;

/// Pixels per heatmap cell.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Stride(f64);

impl Stride {
    pub fn new(s: f64) -> Result<Self> {
        if !s.is_finite() || s < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "stride must be finite and >= 1, got {s}"
            )));
        }
        Ok(Self(s))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Stride {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        Self::new(s)
    }
}

impl From<Stride> for f64 {
    fn from(s: Stride) -> f64 {
        s.0
    }
}

/// Rounding threshold in `[0, 1]`: 1 is floor, 0.5 is round, 0 is ceil.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub const FLOOR: Threshold = Threshold(1.0);
    pub const ROUND: Threshold = Threshold(0.5);
    pub const CEIL: Threshold = Threshold(0.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "threshold must lie in [0, 1], got {t}"
            )));
        }
        Ok(Self(t))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;
    fn try_from(t: f64) -> Result<Self> {
        Self::new(t)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

/// `x / s` split into `base + frac` with `frac` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FractionalDecomposition {
    pub base: i64,
    pub frac: f64,
}

/// Sub-pixel coordinate in input-image pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContinuousPoint {
    pub x: f64,
    pub y: f64,
}

impl ContinuousPoint {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &ContinuousPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Integer heatmap cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub col: i64,
    pub row: i64,
}

impl GridPoint {
    pub const fn new(col: i64, row: i64) -> Self {
        Self { col, row }
    }
}

fn check_finite(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "coordinate must be finite, got {x}"
        )))
    }
}

pub fn decompose(x: f64, s: Stride) -> Result<FractionalDecomposition> {
    check_finite(x)?;
    let q = x / s.get();
    let floor = q.floor();
    let mut frac = q - floor;
    let mut base = floor as i64;
    if frac >= 1.0 - FRAC_SNAP {
        base += 1;
        frac = 0.0;
    }
    Ok(FractionalDecomposition { base, frac })
}

/// Unified floor/round/ceil quantizer: `base` if `eps < t`, else `base + 1`.
pub fn quantize_threshold(x: f64, s: Stride, t: Threshold) -> Result<i64> {
    let d = decompose(x, s)?;
    Ok(if d.frac < t.get() { d.base } else { d.base + 1 })
}

/// Randomized rounding: `base + 1` with probability `eps`.
///
/// Consumes exactly one uniform draw from `rng`, also when `eps == 0`.
pub fn quantize_random_round(x: f64, s: Stride, rng: &mut RngStream) -> Result<i64> {
    let d = decompose(x, s)?;
    // t in [0, 1), so P(t < eps) == eps and eps == 0 never rounds up.
    let t = rng.uniform();
    Ok(if t < d.frac { d.base + 1 } else { d.base })
}

/// Expected per-axis offset of `quantize_threshold` in cells when `eps ~ U(0, 1)`.
pub fn threshold_bias(t: Threshold) -> f64 {
    0.5 - t.get()
}
