//! Heatmap decoders.
//!
//! Every tie between equal cells is broken by the smallest row-major index,
//! so decoding is a pure function of the grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{HeatmapGrid, NORMALIZED_TOL};
use crate::quantizer::{ContinuousPoint, GridPoint, Threshold};

/// Cells and weights consumed by [`decode_expectation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationSet {
    points: Vec<GridPoint>,
    weights: Vec<f64>,
}

impl ActivationSet {
    pub fn new(points: Vec<GridPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("activation set is empty".into()));
        }
        if points.len() != weights.len() {
            return Err(Error::Shape {
                expected: format!("{} weights", points.len()),
                actual: format!("{} weights", weights.len()),
            });
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "activation weights must be finite and >= 0, got {w}"
            )));
        }
        let mut seen = points.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != points.len() {
            return Err(Error::InvalidArgument(
                "activation points must be distinct".into(),
            ));
        }
        Ok(Self { points, weights })
    }

    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ActivationStrategy {
    /// Heaviest 2x2 block that contains the maximum cell.
    FourNeighborOfMax,
    /// 3x3 block centred on the maximum cell, clipped to the grid.
    NineNeighborUnion,
    /// The `k` largest cells.
    TopK { k: usize },
}

/// Row-major index of the maximum cell, first one on ties.
fn argmax_index(h: &HeatmapGrid) -> usize {
    let mut best = 0;
    for (i, v) in h.values().iter().enumerate() {
        if *v > h.values()[best] {
            best = i;
        }
    }
    best
}

/// Indices sorted by value descending, ties by index ascending.
fn ranked_indices(h: &HeatmapGrid) -> Vec<usize> {
    let v = h.values();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

fn scaled(h: &HeatmapGrid, col: f64, row: f64) -> ContinuousPoint {
    let s = h.stride().get();
    ContinuousPoint::new(s * col, s * row)
}

pub fn argmax_cell(h: &HeatmapGrid) -> Result<GridPoint> {
    h.check_values()?;
    Ok(h.dims().point(argmax_index(h)))
}

/// `s * argmax`.
pub fn decode_argmax(h: &HeatmapGrid) -> Result<ContinuousPoint> {
    let m = argmax_cell(h)?;
    Ok(scaled(h, m.col as f64, m.row as f64))
}

/// `s * (argmax + t - 0.5)`, undoing the bias of a threshold-`t` encoder.
pub fn decode_argmax_bias_corrected(h: &HeatmapGrid, t: Threshold) -> Result<ContinuousPoint> {
    let m = argmax_cell(h)?;
    let shift = t.get() - 0.5;
    Ok(scaled(h, m.col as f64 + shift, m.row as f64 + shift))
}

/// Moves the argmax a quarter cell towards the second-largest cell, on each
/// axis independently by the sign of the displacement.
pub fn decode_quarter_shift(h: &HeatmapGrid) -> Result<ContinuousPoint> {
    h.check_values()?;
    let ranked = ranked_indices(h);
    let m = h.dims().point(ranked[0]);
    let m2 = h.dims().point(ranked[1]);
    let dc = 0.25 * (m2.col - m.col).signum() as f64;
    let dr = 0.25 * (m2.row - m.row).signum() as f64;
    Ok(scaled(h, m.col as f64 + dc, m.row as f64 + dr))
}

fn block_set(
    h: &HeatmapGrid,
    cols: std::ops::RangeInclusive<i64>,
    rows: std::ops::RangeInclusive<i64>,
) -> Result<ActivationSet> {
    let dims = h.dims();
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for row in rows {
        for col in cols.clone() {
            let p = GridPoint::new(col, row);
            if let Some(v) = h.get(p) {
                debug_assert!(dims.contains(p));
                points.push(p);
                weights.push(v);
            }
        }
    }
    ActivationSet::new(points, weights)
}

pub fn select_activation_set(
    h: &HeatmapGrid,
    strategy: ActivationStrategy,
) -> Result<ActivationSet> {
    h.check_values()?;
    let dims = h.dims();
    match strategy {
        ActivationStrategy::TopK { k } => {
            if k == 0 || k > dims.cells() {
                return Err(Error::InvalidArgument(format!(
                    "top-k needs 1 <= k <= {}, got {k}",
                    dims.cells()
                )));
            }
            let ranked = ranked_indices(h);
            let points = ranked[..k].iter().map(|&i| dims.point(i)).collect();
            let weights = ranked[..k].iter().map(|&i| h.values()[i]).collect();
            ActivationSet::new(points, weights)
        }
        ActivationStrategy::NineNeighborUnion => {
            let m = dims.point(argmax_index(h));
            block_set(h, m.col - 1..=m.col + 1, m.row - 1..=m.row + 1)
        }
        ActivationStrategy::FourNeighborOfMax => {
            let m = dims.point(argmax_index(h));
            let (w, hgt) = (dims.width as i64, dims.height as i64);
            let mut best: Option<(GridPoint, f64)> = None;
            // candidate top-left corners in row-major order
            for top in [m.row - 1, m.row] {
                for left in [m.col - 1, m.col] {
                    if left < 0 || top < 0 || left + 1 >= w || top + 1 >= hgt {
                        continue;
                    }
                    let sum: f64 = [(0, 0), (1, 0), (0, 1), (1, 1)]
                        .iter()
                        .map(|(dc, dr)| h.get(GridPoint::new(left + dc, top + dr)).unwrap_or(0.0))
                        .sum();
                    if best.is_none_or(|(_, b)| sum > b) {
                        best = Some((GridPoint::new(left, top), sum));
                    }
                }
            }
            // grids are at least 2x2, so some block always fits
            let (corner, _) = best.expect("2x2 grid admits a block");
            block_set(h, corner.col..=corner.col + 1, corner.row..=corner.row + 1)
        }
    }
}

/// Weighted mean of the set's cell coordinates, scaled by the stride.
///
/// With `renormalize` the weights are divided by their sum first; without it
/// the raw weights are used as probabilities, which only makes sense when
/// the heatmap is a distribution and the set covers its mass.
pub fn decode_expectation(
    h: &HeatmapGrid,
    set: &ActivationSet,
    renormalize: bool,
) -> Result<ContinuousPoint> {
    let total = set.weight_sum();
    let norm = if renormalize {
        if total <= 0.0 {
            return Err(Error::DegenerateSet);
        }
        total
    } else {
        if !h.is_distribution() {
            log::warn!(
                "literal expectation decode on a heatmap summing to {}",
                h.sum()
            );
        }
        if (total - 1.0).abs() > NORMALIZED_TOL {
            log::warn!("activation weights sum to {total}, coordinates will be scaled");
        }
        1.0
    };
    let (mut col, mut row) = (0.0, 0.0);
    for (p, w) in set.points().iter().zip(set.weights()) {
        col += w * p.col as f64;
        row += w * p.row as f64;
    }
    Ok(scaled(h, col / norm, row / norm))
}
