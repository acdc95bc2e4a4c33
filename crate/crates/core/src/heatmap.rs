use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quantizer::{GridPoint, Stride};

/// Sum tolerance for treating a grid as a probability distribution.
pub const NORMALIZED_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn contains(&self, p: GridPoint) -> bool {
        p.col >= 0 && p.row >= 0 && (p.col as usize) < self.width && (p.row as usize) < self.height
    }

    pub fn index(&self, p: GridPoint) -> Option<usize> {
        self.contains(p)
            .then(|| p.row as usize * self.width + p.col as usize)
    }

    pub fn point(&self, index: usize) -> GridPoint {
        GridPoint::new((index % self.width) as i64, (index / self.width) as i64)
    }

    fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidArgument(format!(
                "heatmap must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        Ok(())
    }
}

/// Row-major grid of non-negative activations for one landmark.
///
/// `normalized` records whether the values are meant to form a probability
/// distribution; it is only trusted after [`HeatmapGrid::is_distribution`]
/// confirms the sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHeatmap", into = "RawHeatmap")]
pub struct HeatmapGrid {
    dims: Dims,
    stride: Stride,
    values: Vec<f64>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHeatmap {
    width: usize,
    height: usize,
    stride: Stride,
    #[serde(default)]
    normalized: bool,
    values: Vec<f64>,
}

impl TryFrom<RawHeatmap> for HeatmapGrid {
    type Error = Error;
    fn try_from(raw: RawHeatmap) -> Result<Self> {
        let mut grid =
            HeatmapGrid::from_values(Dims::new(raw.width, raw.height), raw.stride, raw.values)?;
        grid.normalized = raw.normalized;
        Ok(grid)
    }
}

impl From<HeatmapGrid> for RawHeatmap {
    fn from(g: HeatmapGrid) -> Self {
        RawHeatmap {
            width: g.dims.width,
            height: g.dims.height,
            stride: g.stride,
            normalized: g.normalized,
            values: g.values,
        }
    }
}

impl HeatmapGrid {
    pub fn zeros(dims: Dims, stride: Stride) -> Result<Self> {
        dims.validate()?;
        Ok(Self {
            dims,
            stride,
            values: vec![0.0; dims.cells()],
            normalized: false,
        })
    }

    pub fn from_values(dims: Dims, stride: Stride, values: Vec<f64>) -> Result<Self> {
        dims.validate()?;
        if values.len() != dims.cells() {
            return Err(Error::Shape {
                expected: format!("{} values", dims.cells()),
                actual: format!("{} values", values.len()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidHeatmap(format!(
                "cell {i} holds {}, values must be finite and non-negative",
                values[i]
            )));
        }
        Ok(Self {
            dims,
            stride,
            values,
            normalized: false,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn stride(&self) -> Stride {
        self.stride
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn normalized(&self) -> bool {
        self.normalized
    }

    pub fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized;
        self
    }

    pub fn get(&self, p: GridPoint) -> Option<f64> {
        self.dims.index(p).map(|i| self.values[i])
    }

    pub fn set(&mut self, p: GridPoint, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidHeatmap(format!("cannot store {value}")));
        }
        let i = self.dims.index(p).ok_or(Error::EncodeOutOfBounds {
            col: p.col,
            row: p.row,
            width: self.dims.width,
            height: self.dims.height,
        })?;
        self.values[i] = value;
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn is_distribution(&self) -> bool {
        (self.sum() - 1.0).abs() <= NORMALIZED_TOL
    }

    /// Divides every cell by the grid sum and marks the grid normalized.
    pub fn normalize(&mut self) -> Result<()> {
        let total = self.sum();
        if total <= 0.0 {
            return Err(Error::InvalidHeatmap(
                "cannot normalize a grid with zero mass".into(),
            ));
        }
        self.values.iter_mut().for_each(|v| *v /= total);
        self.normalized = true;
        Ok(())
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    /// Re-checks the value invariant. Grids built through this crate always
    /// pass; the check guards decoders against hand-assembled inputs.
    pub(crate) fn check_values(&self) -> Result<()> {
        match self.values.iter().position(|v| v.is_nan()) {
            Some(i) => Err(Error::InvalidHeatmap(format!("NaN at cell {i}"))),
            None => Ok(()),
        }
    }
}
