//! Synthetic heatmap predictors and annotator models.
//!
//! The noise forms here are synthetic stand-ins for the error of a trained
//! network. They are not fitted to anything.

use serde::{Deserialize, Serialize};

use crate::encode::{encode_binary, encode_expected, encode_gaussian, CenterMode, GaussianConfig};
use crate::error::{Error, Result};
use crate::heatmap::{Dims, HeatmapGrid};
use crate::quantizer::{quantize_random_round, ContinuousPoint, Stride, Threshold};
use crate::rng::RngStream;

/// Heatmap a perfect predictor would output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum BaseEncoder {
    /// Expected randomized-rounding heatmap.
    Expected {},
    /// One-hot at the threshold-quantized cell.
    Binary { threshold: Threshold },
    /// Gaussian heatmap, rescaled to unit mass.
    Gaussian {
        sigma: f64,
        #[serde(default)]
        radius: Option<usize>,
        #[serde(default = "default_threshold")]
        threshold: Threshold,
        #[serde(default)]
        center: CenterMode,
    },
}

fn default_threshold() -> Threshold {
    Threshold::ROUND
}

impl BaseEncoder {
    pub fn encode(&self, gt: ContinuousPoint, s: Stride, dims: Dims) -> Result<HeatmapGrid> {
        match *self {
            BaseEncoder::Expected {} => encode_expected(gt, s, dims),
            BaseEncoder::Binary { threshold } => encode_binary(gt, s, dims, threshold),
            BaseEncoder::Gaussian {
                sigma,
                radius,
                threshold,
                center,
            } => {
                let cfg = GaussianConfig { sigma, radius };
                let mut g = encode_gaussian(gt, s, dims, cfg, threshold, center)?;
                g.normalize()?;
                Ok(g)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PredictorKind {
    Perfect {},
    /// Adds i.i.d. `U(0, level * max_cell)` to every cell.
    AdditiveNoise {
        level: f64,
    },
    /// Convolves with a truncated Gaussian of `blur_sigma` cells.
    Blur {
        blur_sigma: f64,
    },
    /// Applies the stages in order.
    Composite {
        stages: Vec<PredictorKind>,
    },
}

impl PredictorKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            PredictorKind::Perfect {} => Ok(()),
            PredictorKind::AdditiveNoise { level } if !level.is_finite() || *level < 0.0 => Err(
                Error::InvalidArgument(format!("noise level must be finite and >= 0, got {level}")),
            ),
            PredictorKind::Blur { blur_sigma } if !blur_sigma.is_finite() || *blur_sigma < 0.0 => {
                Err(Error::InvalidArgument(format!(
                    "blur_sigma must be finite and >= 0, got {blur_sigma}"
                )))
            }
            PredictorKind::Composite { stages } => stages.iter().try_for_each(Self::validate),
            _ => Ok(()),
        }
    }

    fn apply(&self, grid: &mut HeatmapGrid, rng: &mut RngStream) -> Result<()> {
        match self {
            PredictorKind::Perfect {} => Ok(()),
            PredictorKind::AdditiveNoise { level } => {
                if *level == 0.0 {
                    return Ok(());
                }
                let max = grid.values().iter().cloned().fold(0.0, f64::max);
                let amp = level * max;
                for v in grid.values_mut() {
                    *v = (*v + amp * rng.uniform()).max(0.0);
                }
                grid.normalize()
            }
            PredictorKind::Blur { blur_sigma } => {
                if *blur_sigma == 0.0 {
                    return Ok(());
                }
                blur(grid, *blur_sigma);
                grid.normalize()
            }
            PredictorKind::Composite { stages } => {
                stages.iter().try_for_each(|stage| stage.apply(grid, rng))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub kind: PredictorKind,
    pub base: BaseEncoder,
}

impl PredictorConfig {
    pub fn perfect(base: BaseEncoder) -> Self {
        Self {
            kind: PredictorKind::Perfect {},
            base,
        }
    }
}

/// Separable truncated Gaussian convolution with zero padding.
fn blur(grid: &mut HeatmapGrid, sigma: f64) {
    let r = (3.0 * sigma).ceil() as i64;
    let kernel: Vec<f64> = (-r..=r)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let ksum: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / ksum).collect();

    let (w, h) = (grid.width() as i64, grid.height() as i64);
    let src = grid.values().to_vec();
    let mut tmp = vec![0.0; src.len()];
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let c = col + j as i64 - r;
                if (0..w).contains(&c) {
                    acc += k * src[(row * w + c) as usize];
                }
            }
            tmp[(row * w + col) as usize] = acc;
        }
    }
    let out = grid.values_mut();
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (j, k) in kernel.iter().enumerate() {
                let rr = row + j as i64 - r;
                if (0..h).contains(&rr) {
                    acc += k * tmp[(rr * w + col) as usize];
                }
            }
            out[(row * w + col) as usize] = acc;
        }
    }
}

/// Simulated network output for a landmark at `gt`.
pub fn predict(
    gt: ContinuousPoint,
    cfg: &PredictorConfig,
    dims: Dims,
    s: Stride,
    rng: &mut RngStream,
) -> Result<HeatmapGrid> {
    cfg.kind.validate()?;
    let mut grid = cfg.base.encode(gt, s, dims)?;
    cfg.kind.apply(&mut grid, rng)?;
    Ok(grid)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum AnnotatorConfig {
    /// Clicks one of the four surrounding pixels with bilinear probabilities.
    UnbiasedStochastic {},
    /// Clicks the nearest pixel.
    DeterministicRound {},
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self::UnbiasedStochastic {}
    }
}

/// Integer pixel an annotator would click for `true_point`.
pub fn annotate(
    true_point: ContinuousPoint,
    cfg: AnnotatorConfig,
    rng: &mut RngStream,
) -> Result<ContinuousPoint> {
    if !true_point.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "annotation target must be finite, got {true_point:?}"
        )));
    }
    match cfg {
        AnnotatorConfig::UnbiasedStochastic {} => {
            let unit = Stride::new(1.0)?;
            Ok(ContinuousPoint::new(
                quantize_random_round(true_point.x, unit, rng)? as f64,
                quantize_random_round(true_point.y, unit, rng)? as f64,
            ))
        }
        AnnotatorConfig::DeterministicRound {} => Ok(ContinuousPoint::new(
            (true_point.x + 0.5).floor(),
            (true_point.y + 0.5).floor(),
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s4() -> Stride {
        Stride::new(4.0).unwrap()
    }

    const GT: ContinuousPoint = ContinuousPoint::new(33.0, 41.0);

    fn dims() -> Dims {
        Dims::new(16, 16)
    }

    fn run(kind: PredictorKind) -> HeatmapGrid {
        let cfg = PredictorConfig {
            kind,
            base: BaseEncoder::Expected {},
        };
        predict(GT, &cfg, dims(), s4(), &mut RngStream::new(9, 9)).unwrap()
    }

    #[test]
    fn perfect_is_bit_identical() {
        let expected = encode_expected(GT, s4(), dims()).unwrap();
        let perfect = run(PredictorKind::Perfect {});
        let bits = |g: &HeatmapGrid| g.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&expected), bits(&perfect));
        assert_eq!(
            bits(&perfect),
            bits(&run(PredictorKind::AdditiveNoise { level: 0.0 }))
        );
        assert_eq!(
            bits(&perfect),
            bits(&run(PredictorKind::Blur { blur_sigma: 0.0 }))
        );
    }

    #[test]
    fn outputs_are_distributions() {
        for kind in [
            PredictorKind::AdditiveNoise { level: 0.2 },
            PredictorKind::Blur { blur_sigma: 1.3 },
            PredictorKind::Composite {
                stages: vec![
                    PredictorKind::Blur { blur_sigma: 0.8 },
                    PredictorKind::AdditiveNoise { level: 0.05 },
                ],
            },
        ] {
            let g = run(kind);
            assert!((g.sum() - 1.0).abs() <= 1e-6);
            assert!(g.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn gaussian_base_has_unit_mass() {
        let cfg = PredictorConfig::perfect(BaseEncoder::Gaussian {
            sigma: 1.0,
            radius: None,
            threshold: Threshold::ROUND,
            center: CenterMode::Quantized,
        });
        let g = predict(GT, &cfg, dims(), s4(), &mut RngStream::new(0, 0)).unwrap();
        assert!((g.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn composite_order_matters() {
        let a = run(PredictorKind::Composite {
            stages: vec![
                PredictorKind::Blur { blur_sigma: 1.0 },
                PredictorKind::AdditiveNoise { level: 0.3 },
            ],
        });
        let b = run(PredictorKind::Composite {
            stages: vec![
                PredictorKind::AdditiveNoise { level: 0.3 },
                PredictorKind::Blur { blur_sigma: 1.0 },
            ],
        });
        assert_ne!(a.values(), b.values());
    }

    #[test]
    fn blur_preserves_interior_mean() {
        let g = run(PredictorKind::Blur { blur_sigma: 1.0 });
        let (mut x, mut y) = (0.0, 0.0);
        for (i, v) in g.values().iter().enumerate() {
            let p = g.dims().point(i);
            x += v * p.col as f64;
            y += v * p.row as f64;
        }
        assert!((4.0 * x - GT.x).abs() < 1e-9 && (4.0 * y - GT.y).abs() < 1e-9);
    }

    #[test]
    fn invalid_predictor_params() {
        assert!(PredictorKind::AdditiveNoise { level: -0.1 }
            .validate()
            .is_err());
        assert!(PredictorKind::Blur {
            blur_sigma: f64::NAN
        }
        .validate()
        .is_err());
        assert!(PredictorKind::Composite {
            stages: vec![PredictorKind::Blur { blur_sigma: -1.0 }]
        }
        .validate()
        .is_err());
    }

    #[test]
    fn encode_errors_propagate() {
        let cfg = PredictorConfig::perfect(BaseEncoder::Expected {});
        let err = predict(
            ContinuousPoint::new(1000.0, 1.0),
            &cfg,
            dims(),
            s4(),
            &mut RngStream::new(0, 0),
        );
        assert!(matches!(err, Err(Error::EncodeOutOfBounds { .. })));
    }

    #[test]
    fn annotate_integer_point_is_fixed() {
        let mut rng = RngStream::new(4, 4);
        for _ in 0..1000 {
            assert_eq!(
                annotate(
                    ContinuousPoint::new(3.0, 7.0),
                    AnnotatorConfig::UnbiasedStochastic {},
                    &mut rng
                )
                .unwrap(),
                ContinuousPoint::new(3.0, 7.0)
            );
        }
    }

    #[test]
    fn annotate_deterministic_rounds() {
        let mut rng = RngStream::new(4, 4);
        assert_eq!(
            annotate(
                ContinuousPoint::new(3.25, 7.75),
                AnnotatorConfig::DeterministicRound {},
                &mut rng
            )
            .unwrap(),
            ContinuousPoint::new(3.0, 8.0)
        );
        assert!(annotate(
            ContinuousPoint::new(f64::NAN, 0.0),
            AnnotatorConfig::DeterministicRound {},
            &mut rng
        )
        .is_err());
    }

    #[test]
    fn annotate_unbiased_monte_carlo() {
        // 3 sigma of Bernoulli(0.25) mean at n = 1e6 is 0.0013
        let n = 1_000_000;
        let mut rng = RngStream::new(21, 0);
        let (mut sx, mut sy, mut hits) = (0.0, 0.0, 0usize);
        for _ in 0..n {
            let p = annotate(
                ContinuousPoint::new(3.25, 7.75),
                AnnotatorConfig::UnbiasedStochastic {},
                &mut rng,
            )
            .unwrap();
            sx += p.x;
            sy += p.y;
            hits += usize::from(p == ContinuousPoint::new(3.0, 8.0));
        }
        let n = n as f64;
        assert!((sx / n - 3.25).abs() <= 0.0015);
        assert!((sy / n - 7.75).abs() <= 0.0015);
        assert!((hits as f64 / n - 0.5625).abs() <= 0.0015);
    }
}
