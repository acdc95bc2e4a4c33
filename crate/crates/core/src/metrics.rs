//! Landmark evaluation metrics and training-loss evaluators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heatmap::HeatmapGrid;
use crate::quantizer::ContinuousPoint;

/// How the NME normalization distance is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum NormalizationKind {
    /// Distance between two ground-truth landmarks (outer eye corners).
    InterOcular {
        left: usize,
        right: usize,
    },
    /// Distance between two ground-truth landmarks (pupil centres).
    InterPupil {
        left: usize,
        right: usize,
    },
    /// `sqrt(w * h)` of the face box.
    #[serde(rename = "bbox_sqrt")]
    BBoxSqrt {
        w: f64,
        h: f64,
    },
    FixedDistance {
        d: f64,
    },
}

impl NormalizationKind {
    pub fn distance(&self, gts: &[ContinuousPoint]) -> Result<f64> {
        let d = match *self {
            NormalizationKind::InterOcular { left, right }
            | NormalizationKind::InterPupil { left, right } => {
                let a = gts.get(left).ok_or_else(|| bad_index(left, gts.len()))?;
                let b = gts.get(right).ok_or_else(|| bad_index(right, gts.len()))?;
                a.distance(b)
            }
            NormalizationKind::BBoxSqrt { w, h } => (w * h).sqrt(),
            NormalizationKind::FixedDistance { d } => d,
        };
        if d.is_finite() && d > 0.0 {
            Ok(d)
        } else {
            Err(Error::InvalidNormalization(d))
        }
    }
}

fn bad_index(i: usize, len: usize) -> Error {
    Error::InvalidArgument(format!(
        "normalization landmark {i} out of range for {len} landmarks"
    ))
}

/// Predictions and ground truth for the `K` landmarks of one image.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSetPair {
    predictions: Vec<ContinuousPoint>,
    ground_truth: Vec<ContinuousPoint>,
    visible: Option<Vec<bool>>,
}

impl LandmarkSetPair {
    pub fn new(
        predictions: Vec<ContinuousPoint>,
        ground_truth: Vec<ContinuousPoint>,
    ) -> Result<Self> {
        if predictions.is_empty() {
            return Err(Error::InvalidArgument("landmark set is empty".into()));
        }
        if predictions.len() != ground_truth.len() {
            return Err(Error::Shape {
                expected: format!("{} ground-truth landmarks", predictions.len()),
                actual: format!("{}", ground_truth.len()),
            });
        }
        Ok(Self {
            predictions,
            ground_truth,
            visible: None,
        })
    }

    pub fn with_visibility(mut self, visible: Vec<bool>) -> Result<Self> {
        if visible.len() != self.predictions.len() {
            return Err(Error::Shape {
                expected: format!("{} visibility flags", self.predictions.len()),
                actual: format!("{}", visible.len()),
            });
        }
        self.visible = Some(visible);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.predictions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.predictions.is_empty()
    }

    pub fn predictions(&self) -> &[ContinuousPoint] {
        &self.predictions
    }

    pub fn ground_truth(&self) -> &[ContinuousPoint] {
        &self.ground_truth
    }

    pub fn is_visible(&self, i: usize) -> bool {
        self.visible.as_ref().is_none_or(|v| v[i])
    }

    /// Euclidean errors of the visible landmarks.
    pub fn visible_errors(&self) -> Vec<f64> {
        (0..self.len())
            .filter(|&i| self.is_visible(i))
            .map(|i| self.predictions[i].distance(&self.ground_truth[i]))
            .collect()
    }
}

/// Normalized mean error, in percent.
pub fn nme(pair: &LandmarkSetPair, norm: NormalizationKind) -> Result<f64> {
    let d = norm.distance(pair.ground_truth())?;
    let errors = pair.visible_errors();
    if errors.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    Ok(100.0 * errors.iter().map(|e| e / d).sum::<f64>() / errors.len() as f64)
}

/// Fraction of visible landmarks within `alpha * l` (boundary inclusive).
pub fn pck(pair: &LandmarkSetPair, l: f64, alpha: f64) -> Result<f64> {
    if !(l.is_finite() && l > 0.0) {
        return Err(Error::InvalidNormalization(l));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let errors = pair.visible_errors();
    if errors.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let radius = alpha * l;
    let hits = errors.iter().filter(|e| **e <= radius).count();
    Ok(hits as f64 / errors.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateLoss {
    Mse,
    Mae,
}

pub fn coordinate_loss(pair: &LandmarkSetPair, kind: CoordinateLoss) -> f64 {
    let n = pair.len() as f64;
    pair.predictions()
        .iter()
        .zip(pair.ground_truth())
        .map(|(p, g)| {
            let (dx, dy) = (p.x - g.x, p.y - g.y);
            match kind {
                CoordinateLoss::Mse => dx * dx + dy * dy,
                CoordinateLoss::Mae => dx.abs() + dy.abs(),
            }
        })
        .sum::<f64>()
        / n
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapLoss {
    Mse,
    /// Softmax over all cells of the raw prediction, then cross-entropy.
    CrossEntropySoftmax,
}

pub fn heatmap_loss(pred: &HeatmapGrid, gt: &HeatmapGrid, kind: HeatmapLoss) -> Result<f64> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape {
            expected: format!("{}x{}", gt.width(), gt.height()),
            actual: format!("{}x{}", pred.width(), pred.height()),
        });
    }
    Ok(match kind {
        HeatmapLoss::Mse => {
            pred.values()
                .iter()
                .zip(gt.values())
                .map(|(p, g)| (p - g) * (p - g))
                .sum::<f64>()
                / pred.values().len() as f64
        }
        HeatmapLoss::CrossEntropySoftmax => softmax_cross_entropy(pred.values(), gt.values())?,
    })
}

/// `-sum target * log_softmax(logits)`; logits may be any finite reals.
pub fn softmax_cross_entropy(logits: &[f64], target: &[f64]) -> Result<f64> {
    if logits.len() != target.len() || logits.is_empty() {
        return Err(Error::Shape {
            expected: format!("{} targets", logits.len()),
            actual: format!("{}", target.len()),
        });
    }
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(logits
        .iter()
        .zip(target)
        .filter(|(_, t)| **t != 0.0)
        .map(|(l, t)| -t * (l - log_z))
        .sum())
}

/// Localization error split into its heatmap and quantization parts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub localization: f64,
    pub heatmap_err: f64,
    pub quant_err: f64,
}

impl ErrorDecomposition {
    /// `localization <= heatmap_err + quant_err` up to rounding.
    pub fn satisfies_triangle(&self) -> bool {
        let bound = self.heatmap_err + self.quant_err;
        self.localization <= bound + 1e-12 * bound.max(1.0)
    }
}

pub fn decompose_error(
    x_pred: ContinuousPoint,
    x_opt: ContinuousPoint,
    x_gt: ContinuousPoint,
) -> ErrorDecomposition {
    let out = ErrorDecomposition {
        localization: x_pred.distance(&x_gt),
        heatmap_err: x_pred.distance(&x_opt),
        quant_err: x_opt.distance(&x_gt),
    };
    debug_assert!(out.satisfies_triangle(), "{out:?}");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heatmap::Dims;
    use crate::quantizer::{GridPoint, Stride};

    fn pts(v: &[(f64, f64)]) -> Vec<ContinuousPoint> {
        v.iter()
            .map(|(x, y)| ContinuousPoint::new(*x, *y))
            .collect()
    }

    fn pair(p: &[(f64, f64)], g: &[(f64, f64)]) -> LandmarkSetPair {
        LandmarkSetPair::new(pts(p), pts(g)).unwrap()
    }

    #[test]
    fn nme_examples() {
        let fixed = |d| NormalizationKind::FixedDistance { d };
        let p = pair(&[(1.0, 1.0), (2.0, 2.0)], &[(1.0, 1.0), (2.0, 1.0)]);
        assert_eq!(nme(&p, fixed(2.0)).unwrap(), 25.0);
        let p = pair(&[(1.0, 1.0), (2.0, 2.0)], &[(1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(nme(&p, fixed(2.0)).unwrap(), 0.0);
        let p = pair(&[(3.0, 4.0)], &[(0.0, 0.0)]);
        assert_eq!(nme(&p, fixed(5.0)).unwrap(), 100.0);
    }

    #[test]
    fn nme_normalizations() {
        let gts = [(0.0, 0.0), (4.0, 0.0), (10.0, 10.0)];
        let p = pair(&[(0.0, 1.0), (4.0, 0.0), (10.0, 10.0)], &gts);
        let io = NormalizationKind::InterOcular { left: 0, right: 1 };
        assert!((nme(&p, io).unwrap() - 100.0 / 3.0 * 0.25).abs() < 1e-12);
        let bb = NormalizationKind::BBoxSqrt { w: 2.0, h: 8.0 };
        assert!((nme(&p, bb).unwrap() - 100.0 / 3.0 * 0.25).abs() < 1e-12);
        let bad = NormalizationKind::InterPupil { left: 0, right: 7 };
        assert!(nme(&p, bad).is_err());
    }

    #[test]
    fn nme_errors() {
        let p = pair(&[(1.0, 1.0)], &[(1.0, 1.0)]);
        assert_eq!(
            nme(&p, NormalizationKind::FixedDistance { d: 0.0 }),
            Err(Error::InvalidNormalization(0.0))
        );
        // coincident eye corners
        let p = pair(&[(1.0, 1.0), (1.0, 1.0)], &[(1.0, 1.0), (1.0, 1.0)]);
        assert!(matches!(
            nme(&p, NormalizationKind::InterOcular { left: 0, right: 1 }),
            Err(Error::InvalidNormalization(_))
        ));
        let p = pair(&[(1.0, 1.0)], &[(1.0, 1.0)])
            .with_visibility(vec![false])
            .unwrap();
        assert_eq!(
            nme(&p, NormalizationKind::FixedDistance { d: 1.0 }),
            Err(Error::EmptyEvaluation)
        );
    }

    #[test]
    fn masked_landmarks_are_skipped() {
        let p = pair(&[(1.0, 1.0), (9.0, 9.0)], &[(1.0, 2.0), (1.0, 1.0)])
            .with_visibility(vec![true, false])
            .unwrap();
        assert_eq!(
            nme(&p, NormalizationKind::FixedDistance { d: 1.0 }).unwrap(),
            100.0
        );
        assert_eq!(pck(&p, 10.0, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn pck_examples() {
        let p = pair(&[(1.0, 1.0), (2.0, 2.0)], &[(1.0, 1.0), (2.0, 2.0)]);
        assert_eq!(pck(&p, 10.0, 0.5).unwrap(), 1.0);
        let p = pair(&[(5.0, 0.0)], &[(0.0, 0.0)]);
        assert_eq!(pck(&p, 10.0, 0.5).unwrap(), 1.0);
        let p = pair(&[(0.0, 0.0), (10.0, 0.0)], &[(0.0, 0.0), (0.0, 0.0)]);
        assert_eq!(pck(&p, 10.0, 0.5).unwrap(), 0.5);
        assert!(pck(&p, 0.0, 0.5).is_err());
        assert!(pck(&p, 1.0, 1.5).is_err());
    }

    #[test]
    fn coordinate_loss_examples() {
        let p = pair(&[(1.0, 2.0)], &[(1.0, 2.0)]);
        assert_eq!(coordinate_loss(&p, CoordinateLoss::Mse), 0.0);
        let p = pair(&[(4.0, 6.0)], &[(1.0, 2.0)]);
        assert_eq!(coordinate_loss(&p, CoordinateLoss::Mse), 25.0);
        assert_eq!(coordinate_loss(&p, CoordinateLoss::Mae), 7.0);
    }

    fn grid(w: usize, h: usize, v: Vec<f64>) -> HeatmapGrid {
        HeatmapGrid::from_values(Dims::new(w, h), Stride::new(4.0).unwrap(), v).unwrap()
    }

    #[test]
    fn heatmap_loss_examples() {
        let mut g = HeatmapGrid::zeros(Dims::new(4, 3), Stride::new(4.0).unwrap()).unwrap();
        g.set(GridPoint::new(1, 2), 1.0).unwrap();
        assert_eq!(heatmap_loss(&g, &g, HeatmapLoss::Mse).unwrap(), 0.0);

        let uniform = grid(4, 3, vec![0.7; 12]);
        let ce = heatmap_loss(&uniform, &g, HeatmapLoss::CrossEntropySoftmax).unwrap();
        assert!((ce - 12f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_closed_form() {
        // direct summation oracle vs log(1 + (n - 1) e^{-c})
        let n = 12usize;
        for c in [0.0, 0.5, 2.0, 7.0] {
            let mut logits = vec![0.0; n];
            logits[5] = c;
            let mut target = vec![0.0; n];
            target[5] = 1.0;
            let z: f64 = logits.iter().map(|l: &f64| l.exp()).sum();
            let direct = -(c.exp() / z).ln();
            let closed = (1.0 + (n as f64 - 1.0) * (-c).exp()).ln();
            let got = softmax_cross_entropy(&logits, &target).unwrap();
            assert!((got - direct).abs() < 1e-12);
            assert!((got - closed).abs() < 1e-12);
        }
        let closed0 = (1.0 + 11.0 * 1.0f64).ln();
        assert!((closed0 - 12f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn heatmap_loss_shape_mismatch() {
        let a = grid(2, 2, vec![0.0; 4]);
        let b = grid(2, 3, vec![0.0; 6]);
        assert!(matches!(
            heatmap_loss(&a, &b, HeatmapLoss::Mse),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn decompose_error_examples() {
        let a = ContinuousPoint::new(1.0, 2.0);
        let d = decompose_error(a, a, a);
        assert_eq!(
            (d.localization, d.heatmap_err, d.quant_err),
            (0.0, 0.0, 0.0)
        );
        let p = ContinuousPoint::new(4.0, 6.0);
        let d = decompose_error(p, a, a);
        assert_eq!(d.localization, d.heatmap_err);
        let d = decompose_error(p, p, a);
        assert_eq!(d.localization, d.quant_err);
        assert!(d.satisfies_triangle());
    }

    #[test]
    fn pair_validation() {
        assert!(LandmarkSetPair::new(vec![], vec![]).is_err());
        assert!(LandmarkSetPair::new(pts(&[(0.0, 0.0)]), pts(&[])).is_err());
        let p = pair(&[(0.0, 0.0)], &[(0.0, 0.0)]);
        assert!(p.with_visibility(vec![true, true]).is_err());
    }
}
