//! Ground-truth heatmap encoders.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::{Dims, HeatmapGrid};
use crate::quantizer::{
    decompose, quantize_random_round, quantize_threshold, ContinuousPoint, GridPoint, Stride,
    Threshold,
};
use crate::rng::RngStream;

/// Isotropic Gaussian kernel, in heatmap cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub sigma: f64,
    /// Truncation half-width; `None` means `ceil(3 * sigma)`.
    #[serde(default)]
    pub radius: Option<usize>,
}

impl GaussianConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        let cfg = Self {
            sigma,
            radius: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_radius(mut self, radius: usize) -> Self {
        self.radius = Some(radius);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.sigma.is_finite() || self.sigma < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "sigma must be finite and >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> usize {
        self.radius
            .unwrap_or_else(|| (3.0 * self.sigma).ceil() as usize)
    }
}

/// Where the Gaussian peak sits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenterMode {
    /// Integer cell from the threshold quantizer; peak value is exactly 1.
    #[default]
    Quantized,
    /// Sub-cell center `gt / s`.
    Exact,
}

fn out_of_bounds(p: GridPoint, dims: Dims) -> Error {
    Error::EncodeOutOfBounds {
        col: p.col,
        row: p.row,
        width: dims.width,
        height: dims.height,
    }
}

fn require_in_bounds(p: GridPoint, dims: Dims) -> Result<()> {
    if dims.contains(p) {
        Ok(())
    } else {
        Err(out_of_bounds(p, dims))
    }
}

pub fn quantize_point(gt: ContinuousPoint, s: Stride, t: Threshold) -> Result<GridPoint> {
    Ok(GridPoint::new(
        quantize_threshold(gt.x, s, t)?,
        quantize_threshold(gt.y, s, t)?,
    ))
}

fn one_hot(cell: GridPoint, s: Stride, dims: Dims) -> Result<HeatmapGrid> {
    require_in_bounds(cell, dims)?;
    let mut grid = HeatmapGrid::zeros(dims, s)?;
    grid.set(cell, 1.0)?;
    Ok(grid.with_normalized(true))
}

/// One-hot heatmap at the threshold-quantized cell.
pub fn encode_binary(
    gt: ContinuousPoint,
    s: Stride,
    dims: Dims,
    t: Threshold,
) -> Result<HeatmapGrid> {
    one_hot(quantize_point(gt, s, t)?, s, dims)
}

/// Unnormalized Gaussian heatmap `exp(-|x - c|^2 / (2 sigma^2))`, zero beyond
/// the kernel radius (square window around the nearest cell to `c`).
pub fn encode_gaussian(
    gt: ContinuousPoint,
    s: Stride,
    dims: Dims,
    cfg: GaussianConfig,
    t: Threshold,
    center_mode: CenterMode,
) -> Result<HeatmapGrid> {
    cfg.validate()?;
    let (cx, cy, anchor) = match center_mode {
        CenterMode::Quantized => {
            let c = quantize_point(gt, s, t)?;
            (c.col as f64, c.row as f64, c)
        }
        CenterMode::Exact => {
            if !gt.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite point {gt:?}")));
            }
            let (cx, cy) = (gt.x / s.get(), gt.y / s.get());
            let anchor = GridPoint::new(cx.round() as i64, cy.round() as i64);
            if cx < 0.0 || cy < 0.0 || cx > (dims.width - 1) as f64 || cy > (dims.height - 1) as f64
            {
                return Err(out_of_bounds(anchor, dims));
            }
            (cx, cy, anchor)
        }
    };
    if cfg.sigma == 0.0 {
        return encode_binary(gt, s, dims, t);
    }
    require_in_bounds(anchor, dims)?;

    let mut grid = HeatmapGrid::zeros(dims, s)?;
    let r = cfg.radius() as i64;
    let denom = 2.0 * cfg.sigma * cfg.sigma;
    let (w, h) = (dims.width as i64, dims.height as i64);
    let values = grid.values_mut();
    for row in (anchor.row - r).max(0)..=(anchor.row + r).min(h - 1) {
        for col in (anchor.col - r).max(0)..=(anchor.col + r).min(w - 1) {
            let dx = col as f64 - cx;
            let dy = row as f64 - cy;
            values[(row * w + col) as usize] = (-(dx * dx + dy * dy) / denom).exp();
        }
    }
    Ok(grid)
}

/// The four randomized-rounding cells with their activation probabilities,
/// ordered (base, base), (base+1, base), (base, base+1), (base+1, base+1).
pub fn activation_probabilities(gt: ContinuousPoint, s: Stride) -> Result<[(GridPoint, f64); 4]> {
    let dx = decompose(gt.x, s)?;
    let dy = decompose(gt.y, s)?;
    let (ex, ey) = (dx.frac, dy.frac);
    let (c, r) = (dx.base, dy.base);
    Ok([
        (GridPoint::new(c, r), (1.0 - ex) * (1.0 - ey)),
        (GridPoint::new(c + 1, r), ex * (1.0 - ey)),
        (GridPoint::new(c, r + 1), (1.0 - ex) * ey),
        (GridPoint::new(c + 1, r + 1), ex * ey),
    ])
}

/// Expected randomized-rounding heatmap: the four neighbouring cells carry
/// their activation probabilities, everything else is zero.
///
/// All four cells must be inside the grid even when some probabilities are 0.
pub fn encode_expected(gt: ContinuousPoint, s: Stride, dims: Dims) -> Result<HeatmapGrid> {
    let cells = activation_probabilities(gt, s)?;
    for (p, _) in &cells {
        require_in_bounds(*p, dims)?;
    }
    let mut grid = HeatmapGrid::zeros(dims, s)?;
    for (p, prob) in cells {
        grid.set(p, prob)?;
    }
    Ok(grid.with_normalized(true))
}

/// One randomized-rounding sample: each axis is rounded independently.
pub fn encode_sampled(
    gt: ContinuousPoint,
    s: Stride,
    dims: Dims,
    rng: &mut RngStream,
) -> Result<HeatmapGrid> {
    for (p, _) in activation_probabilities(gt, s)? {
        require_in_bounds(p, dims)?;
    }
    let cell = GridPoint::new(
        quantize_random_round(gt.x, s, rng)?,
        quantize_random_round(gt.y, s, rng)?,
    );
    one_hot(cell, s, dims)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s4() -> Stride {
        Stride::new(4.0).unwrap()
    }

    fn hot_cells(g: &HeatmapGrid) -> Vec<(GridPoint, f64)> {
        g.values()
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (g.dims().point(i), *v))
            .collect()
    }

    #[test]
    fn binary_examples() {
        let d = Dims::new(8, 8);
        let g = encode_binary(ContinuousPoint::new(9.0, 15.0), s4(), d, Threshold::ROUND).unwrap();
        assert_eq!(hot_cells(&g), vec![(GridPoint::new(2, 4), 1.0)]);
        assert_eq!(g.sum(), 1.0);
        for t in [0.01, 0.5, 1.0] {
            let g = encode_binary(
                ContinuousPoint::new(8.0, 12.0),
                s4(),
                d,
                Threshold::new(t).unwrap(),
            )
            .unwrap();
            assert_eq!(hot_cells(&g), vec![(GridPoint::new(2, 3), 1.0)]);
        }
    }

    #[test]
    fn binary_out_of_bounds_fails() {
        let d = Dims::new(4, 4);
        let err =
            encode_binary(ContinuousPoint::new(15.0, 2.0), s4(), d, Threshold::ROUND).unwrap_err();
        assert_eq!(
            err,
            Error::EncodeOutOfBounds {
                col: 4,
                row: 1,
                width: 4,
                height: 4
            }
        );
        assert!(encode_binary(ContinuousPoint::new(-3.0, 2.0), s4(), d, Threshold::ROUND).is_err());
    }

    #[test]
    fn gaussian_examples() {
        let d = Dims::new(16, 16);
        let cfg = GaussianConfig::new(1.5).unwrap();
        let gt = ContinuousPoint::new(33.0, 30.0);
        let g = encode_gaussian(gt, s4(), d, cfg, Threshold::ROUND, CenterMode::Quantized).unwrap();
        // center (8, 8) since 30 / 4 = 7.5 rounds up
        assert_eq!(g.get(GridPoint::new(8, 8)), Some(1.0));
        let v = g.get(GridPoint::new(8, 8)).unwrap();
        assert!(g.values().iter().all(|x| *x <= v));

        let g = encode_gaussian(
            gt,
            s4(),
            d,
            GaussianConfig::new(1.0).unwrap(),
            Threshold::ROUND,
            CenterMode::Quantized,
        )
        .unwrap();
        assert!((g.get(GridPoint::new(9, 8)).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        assert!((g.get(GridPoint::new(8, 7)).unwrap() - 0.60653).abs() < 1e-5);
        // radius ceil(3 * 1) = 3
        assert!(g.get(GridPoint::new(11, 8)).unwrap() > 0.0);
        assert_eq!(g.get(GridPoint::new(12, 8)).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_exact_center_peak_below_one() {
        let d = Dims::new(16, 16);
        let g = encode_gaussian(
            ContinuousPoint::new(33.0, 30.0),
            s4(),
            d,
            GaussianConfig::new(1.0).unwrap(),
            Threshold::ROUND,
            CenterMode::Exact,
        )
        .unwrap();
        let max = g.values().iter().cloned().fold(0.0, f64::max);
        assert!(max < 0.999);
        // c = (8.25, 7.5): cells (8,7) and (8,8) are equidistant
        assert_eq!(g.get(GridPoint::new(8, 7)), g.get(GridPoint::new(8, 8)));
    }

    #[test]
    fn gaussian_sigma_zero_is_binary() {
        let d = Dims::new(8, 8);
        let gt = ContinuousPoint::new(9.0, 15.0);
        let b = encode_binary(gt, s4(), d, Threshold::ROUND).unwrap();
        let g = encode_gaussian(
            gt,
            s4(),
            d,
            GaussianConfig::new(0.0).unwrap(),
            Threshold::ROUND,
            CenterMode::Quantized,
        )
        .unwrap();
        assert_eq!(b.values(), g.values());
    }

    #[test]
    fn gaussian_rejects_bad_sigma() {
        assert!(GaussianConfig::new(-1.0).is_err());
        assert!(GaussianConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn expected_examples() {
        let d = Dims::new(8, 8);
        let g = encode_expected(ContinuousPoint::new(9.0, 15.0), s4(), d).unwrap();
        assert_eq!(
            hot_cells(&g),
            vec![
                (GridPoint::new(2, 3), 0.1875),
                (GridPoint::new(3, 3), 0.0625),
                (GridPoint::new(2, 4), 0.5625),
                (GridPoint::new(3, 4), 0.1875),
            ]
        );
        assert!((g.sum() - 1.0).abs() <= 1e-12);

        let g = encode_expected(ContinuousPoint::new(8.0, 12.0), s4(), d).unwrap();
        assert_eq!(hot_cells(&g), vec![(GridPoint::new(2, 3), 1.0)]);
    }

    #[test]
    fn expected_needs_all_four_cells() {
        // base 3 with eps 0 still needs column 4
        let d = Dims::new(4, 8);
        assert!(matches!(
            encode_expected(ContinuousPoint::new(12.0, 4.0), s4(), d),
            Err(Error::EncodeOutOfBounds { col: 4, .. })
        ));
    }

    #[test]
    fn sampled_exact_multiple_is_fixed() {
        let d = Dims::new(8, 8);
        let mut rng = RngStream::new(1, 2);
        for _ in 0..100 {
            let g = encode_sampled(ContinuousPoint::new(8.0, 12.0), s4(), d, &mut rng).unwrap();
            assert_eq!(hot_cells(&g), vec![(GridPoint::new(2, 3), 1.0)]);
        }
    }

    #[test]
    fn sampled_is_one_hot() {
        let d = Dims::new(8, 8);
        let mut rng = RngStream::new(1, 2);
        for _ in 0..100 {
            let g = encode_sampled(ContinuousPoint::new(9.0, 15.0), s4(), d, &mut rng).unwrap();
            assert_eq!(g.sum(), 1.0);
            assert_eq!(hot_cells(&g).len(), 1);
        }
    }
}
