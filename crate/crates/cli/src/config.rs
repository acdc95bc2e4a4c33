//! Sweep configuration (a single JSON document, unknown keys rejected).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rrq_core::encode::CenterMode;
use rrq_core::metrics::NormalizationKind;
use rrq_core::predict::{AnnotatorConfig, BaseEncoder, PredictorKind};
use rrq_core::{ActivationStrategy, Dims, Stride, Threshold};

use crate::error::{HarnessError, Result};
use crate::landmarks::LandmarkFormat;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub trials: u64,
    pub grid: Dims,
    pub strides: Vec<f64>,
    pub encoders: Vec<EncoderSpec>,
    pub decoders: Vec<DecoderSpec>,
    #[serde(default = "default_predictors")]
    pub predictors: Vec<PredictorKind>,
    /// When set, true points are replaced by simulated clicks before encoding.
    #[serde(default)]
    pub annotator: Option<AnnotatorConfig>,
    #[serde(default)]
    pub landmarks: LandmarkSource,
    #[serde(default)]
    pub metrics: MetricConfig,
    #[serde(default)]
    pub output: Option<OutputConfig>,
}

fn default_predictors() -> Vec<PredictorKind> {
    vec![PredictorKind::Perfect {}]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum EncoderSpec {
    Expected {},
    Binary {
        #[serde(default = "round")]
        threshold: Threshold,
    },
    /// One encoder per sigma.
    Gaussian {
        sigma: Vec<f64>,
        #[serde(default)]
        radius: Option<usize>,
        #[serde(default = "round")]
        threshold: Threshold,
        #[serde(default)]
        center: CenterMode,
    },
}

fn round() -> Threshold {
    Threshold::ROUND
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DecoderSpec {
    Argmax {},
    BiasCorrected {
        t: Threshold,
    },
    QuarterShift {},
    /// One decoder per k.
    Topk {
        k: Vec<usize>,
        #[serde(default = "yes")]
        renormalize: bool,
    },
    FourNeighbor {
        #[serde(default = "yes")]
        renormalize: bool,
    },
    NineNeighbor {
        #[serde(default = "yes")]
        renormalize: bool,
    },
}

fn yes() -> bool {
    true
}

/// A single decoder after list expansion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Decoder {
    Argmax,
    BiasCorrected(Threshold),
    QuarterShift,
    Expectation {
        strategy: ActivationStrategy,
        renormalize: bool,
    },
}

impl Decoder {
    pub fn label(&self) -> String {
        match self {
            Decoder::Argmax => "argmax".into(),
            Decoder::BiasCorrected(t) => format!("bias_corrected(t={})", t.get()),
            Decoder::QuarterShift => "quarter_shift".into(),
            Decoder::Expectation {
                strategy,
                renormalize,
            } => {
                let set = match strategy {
                    ActivationStrategy::TopK { k } => format!("topk(k={k}"),
                    ActivationStrategy::FourNeighborOfMax => "four_neighbor(".into(),
                    ActivationStrategy::NineNeighborUnion => "nine_neighbor(".into(),
                };
                let sep = if set.ends_with('(') { "" } else { "," };
                let mode = if *renormalize { "renorm" } else { "literal" };
                format!("{set}{sep}{mode})")
            }
        }
    }
}

pub fn encoder_label(e: &BaseEncoder) -> String {
    match e {
        BaseEncoder::Expected {} => "expected".into(),
        BaseEncoder::Binary { threshold } => format!("binary(t={})", threshold.get()),
        BaseEncoder::Gaussian {
            sigma,
            threshold,
            center,
            ..
        } => {
            let c = match center {
                CenterMode::Quantized => "quantized",
                CenterMode::Exact => "exact",
            };
            format!("gaussian(sigma={sigma},t={},{c})", threshold.get())
        }
    }
}

pub fn predictor_label(p: &PredictorKind) -> String {
    match p {
        PredictorKind::Perfect {} => "perfect".into(),
        PredictorKind::AdditiveNoise { level } => format!("noise({level})"),
        PredictorKind::Blur { blur_sigma } => format!("blur({blur_sigma})"),
        PredictorKind::Composite { stages } => format!(
            "composite[{}]",
            stages
                .iter()
                .map(predictor_label)
                .collect::<Vec<_>>()
                .join(",")
        ),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source", deny_unknown_fields)]
pub enum LandmarkSource {
    /// Uniform over the grid with a one-cell margin on every side.
    Synthetic {
        #[serde(default = "one")]
        per_trial: usize,
    },
    /// Records from a landmark file, cycled when `trials` exceeds their count.
    File {
        path: PathBuf,
        format: LandmarkFormat,
    },
}

fn one() -> usize {
    1
}

impl Default for LandmarkSource {
    fn default() -> Self {
        LandmarkSource::Synthetic { per_trial: 1 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricConfig {
    /// Defaults to `sqrt(w * h)` of the image the grid covers.
    #[serde(default)]
    pub normalization: Option<NormalizationKind>,
    /// PCK thresholds as fractions of the normalization distance.
    #[serde(default)]
    pub alphas: Vec<f64>,
    /// Average per-image NMEs instead of pooling all landmark errors.
    #[serde(default)]
    pub per_image_mean: bool,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: PathBuf,
    #[serde(default)]
    pub format: ReportFormat,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(HarnessError::config("trials", "must be >= 1"));
        }
        if self.grid.width < 4 || self.grid.height < 4 {
            return Err(HarnessError::config(
                "grid",
                "needs at least 4x4 cells to keep a one-cell margin",
            ));
        }
        if self.strides.is_empty() {
            return Err(HarnessError::config("strides", "list is empty"));
        }
        for s in &self.strides {
            Stride::new(*s).map_err(|e| HarnessError::config("strides", e.to_string()))?;
        }
        if self.encoders.is_empty() {
            return Err(HarnessError::config("encoders", "list is empty"));
        }
        for e in &self.encoders {
            if let EncoderSpec::Gaussian { sigma, .. } = e {
                if sigma.is_empty() {
                    return Err(HarnessError::config("encoders.sigma", "list is empty"));
                }
                if let Some(bad) = sigma.iter().find(|s| !s.is_finite() || **s < 0.0) {
                    return Err(HarnessError::config(
                        "encoders.sigma",
                        format!("sigma must be finite and >= 0, got {bad}"),
                    ));
                }
            }
        }
        if self.decoders.is_empty() {
            return Err(HarnessError::config("decoders", "list is empty"));
        }
        let cells = self.grid.cells();
        for d in &self.decoders {
            if let DecoderSpec::Topk { k, .. } = d {
                if k.is_empty() {
                    return Err(HarnessError::config("decoders.k", "list is empty"));
                }
                if let Some(bad) = k.iter().find(|k| **k == 0 || **k > cells) {
                    return Err(HarnessError::config(
                        "decoders.k",
                        format!("k must lie in 1..={cells}, got {bad}"),
                    ));
                }
            }
        }
        if self.predictors.is_empty() {
            return Err(HarnessError::config("predictors", "list is empty"));
        }
        for p in &self.predictors {
            p.validate()
                .map_err(|e| HarnessError::config("predictors", e.to_string()))?;
        }
        if let LandmarkSource::Synthetic { per_trial: 0 } = self.landmarks {
            return Err(HarnessError::config("landmarks.per_trial", "must be >= 1"));
        }
        if let Some(bad) = self
            .metrics
            .alphas
            .iter()
            .find(|a| !(0.0..=1.0).contains(*a))
        {
            return Err(HarnessError::config(
                "metrics.alphas",
                format!("alpha must lie in [0, 1], got {bad}"),
            ));
        }
        Ok(())
    }

    pub fn strides(&self) -> Vec<Stride> {
        self.strides
            .iter()
            .map(|s| Stride::new(*s).expect("validated"))
            .collect()
    }

    pub fn expanded_encoders(&self) -> Vec<BaseEncoder> {
        self.encoders
            .iter()
            .flat_map(|e| match e {
                EncoderSpec::Expected {} => vec![BaseEncoder::Expected {}],
                EncoderSpec::Binary { threshold } => vec![BaseEncoder::Binary {
                    threshold: *threshold,
                }],
                EncoderSpec::Gaussian {
                    sigma,
                    radius,
                    threshold,
                    center,
                } => sigma
                    .iter()
                    .map(|s| BaseEncoder::Gaussian {
                        sigma: *s,
                        radius: *radius,
                        threshold: *threshold,
                        center: *center,
                    })
                    .collect(),
            })
            .collect()
    }

    pub fn expanded_decoders(&self) -> Vec<Decoder> {
        self.decoders
            .iter()
            .flat_map(|d| match d {
                DecoderSpec::Argmax {} => vec![Decoder::Argmax],
                DecoderSpec::BiasCorrected { t } => vec![Decoder::BiasCorrected(*t)],
                DecoderSpec::QuarterShift {} => vec![Decoder::QuarterShift],
                DecoderSpec::Topk { k, renormalize } => k
                    .iter()
                    .map(|k| Decoder::Expectation {
                        strategy: ActivationStrategy::TopK { k: *k },
                        renormalize: *renormalize,
                    })
                    .collect(),
                DecoderSpec::FourNeighbor { renormalize } => vec![Decoder::Expectation {
                    strategy: ActivationStrategy::FourNeighborOfMax,
                    renormalize: *renormalize,
                }],
                DecoderSpec::NineNeighbor { renormalize } => vec![Decoder::Expectation {
                    strategy: ActivationStrategy::NineNeighborUnion,
                    renormalize: *renormalize,
                }],
            })
            .collect()
    }
}
