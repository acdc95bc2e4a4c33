//! encode -> predict -> decode sweeps over the configured cross product.
//!
//! Every trial draws from streams keyed by `(seed, trial index)`, so the rows
//! do not depend on how many workers ran the trials. Rows come out in config
//! order: stride, then encoder, then predictor, then decoder.

use rayon::prelude::*;

use rrq_core::decode::{
    decode_argmax, decode_argmax_bias_corrected, decode_expectation, decode_quarter_shift,
    select_activation_set,
};
use rrq_core::metrics::NormalizationKind;
use rrq_core::oracle::{CheckKind, OracleVerdict, EXACT_TOL};
use rrq_core::predict::{annotate, predict, BaseEncoder, PredictorConfig, PredictorKind};
use rrq_core::{ActivationStrategy, ContinuousPoint, HeatmapGrid, RngStream, Stride};

use crate::config::{encoder_label, predictor_label, Decoder, ExperimentConfig, LandmarkSource};
use crate::error::{HarnessError, Result};
use crate::landmarks::{ingest_landmarks, LandmarkFileRecord};
use crate::report::{ExperimentReport, ReportRow};

/// Independent streams per trial: landmarks, annotation, prediction.
const STREAMS_PER_TRIAL: u64 = 3;
const LANDMARK_STREAM: u64 = 0;
const ANNOTATION_STREAM: u64 = 1;
const PREDICTION_STREAM: u64 = 2;

fn stream(trial: u64, purpose: u64) -> u64 {
    trial * STREAMS_PER_TRIAL + purpose
}

pub fn decode(h: &HeatmapGrid, decoder: Decoder) -> rrq_core::Result<ContinuousPoint> {
    match decoder {
        Decoder::Argmax => decode_argmax(h),
        Decoder::BiasCorrected(t) => decode_argmax_bias_corrected(h, t),
        Decoder::QuarterShift => decode_quarter_shift(h),
        Decoder::Expectation {
            strategy,
            renormalize,
        } => {
            let set = select_activation_set(h, strategy)?;
            decode_expectation(h, &set, renormalize)
        }
    }
}

/// Per-decoder signed errors of one trial's visible landmarks.
struct TrialOutcome {
    norm: f64,
    errors: Vec<Vec<(f64, f64)>>,
}

struct Landmarks {
    points: Vec<ContinuousPoint>,
    visible: Vec<bool>,
    bbox: Option<[f64; 4]>,
}

fn synthetic_landmarks(cfg: &ExperimentConfig, s: Stride, trial: u64, count: usize) -> Landmarks {
    let mut rng = RngStream::new(cfg.seed, stream(trial, LANDMARK_STREAM));
    // x / s uniform on [1, W - 2): base cells 1..=W-3, neighbours stay inside
    let span_x = (cfg.grid.width - 3) as f64;
    let span_y = (cfg.grid.height - 3) as f64;
    let points = (0..count)
        .map(|_| {
            let x = s.get() * (1.0 + span_x * rng.uniform());
            let y = s.get() * (1.0 + span_y * rng.uniform());
            ContinuousPoint::new(x, y)
        })
        .collect();
    Landmarks {
        points,
        visible: vec![true; count],
        bbox: None,
    }
}

fn file_landmarks(records: &[LandmarkFileRecord], trial: u64) -> Landmarks {
    let r = &records[(trial % records.len() as u64) as usize];
    Landmarks {
        points: r.points(),
        visible: r
            .visible
            .clone()
            .unwrap_or_else(|| vec![true; r.landmarks.len()]),
        bbox: r.bbox,
    }
}

fn normalization(cfg: &ExperimentConfig, s: Stride, lm: &Landmarks) -> rrq_core::Result<f64> {
    let kind = match (cfg.metrics.normalization, lm.bbox) {
        (Some(kind), _) => kind,
        (None, Some([_, _, w, h])) => NormalizationKind::BBoxSqrt { w, h },
        (None, None) => NormalizationKind::BBoxSqrt {
            w: s.get() * cfg.grid.width as f64,
            h: s.get() * cfg.grid.height as f64,
        },
    };
    kind.distance(&lm.points)
}

fn run_trial(
    cfg: &ExperimentConfig,
    records: Option<&[LandmarkFileRecord]>,
    s: Stride,
    predictor: &PredictorConfig,
    decoders: &[Decoder],
    trial: u64,
) -> Result<TrialOutcome> {
    let lm = match (records, &cfg.landmarks) {
        (Some(recs), _) => file_landmarks(recs, trial),
        (None, LandmarkSource::Synthetic { per_trial }) => {
            synthetic_landmarks(cfg, s, trial, *per_trial)
        }
        (None, LandmarkSource::File { .. }) => unreachable!("records loaded up front"),
    };
    let norm = normalization(cfg, s, &lm)?;
    let mut ann_rng = RngStream::new(cfg.seed, stream(trial, ANNOTATION_STREAM));
    let mut pred_rng = RngStream::new(cfg.seed, stream(trial, PREDICTION_STREAM));
    let mut errors = vec![Vec::with_capacity(lm.points.len()); decoders.len()];
    for (truth, visible) in lm.points.iter().zip(&lm.visible) {
        let target = match cfg.annotator {
            Some(a) => annotate(*truth, a, &mut ann_rng)?,
            None => *truth,
        };
        let heatmap = predict(target, predictor, cfg.grid, s, &mut pred_rng)?;
        if !visible {
            continue;
        }
        for (d, out) in decoders.iter().zip(errors.iter_mut()) {
            let p = decode(&heatmap, *d)?;
            out.push((p.x - truth.x, p.y - truth.y));
        }
    }
    Ok(TrialOutcome { norm, errors })
}

fn aggregate(
    key: String,
    axes: [String; 3],
    s: Stride,
    outcomes: &[TrialOutcome],
    decoder_index: usize,
    cfg: &ExperimentConfig,
) -> ReportRow {
    let mut n = 0u64;
    let (mut sum_e, mut max_e, mut sum_abs, mut sum_dx, mut sum_dy, mut sum_nme) =
        (0.0, 0.0f64, 0.0, 0.0, 0.0, 0.0);
    let mut per_image_nme = Vec::new();
    let mut hits = vec![0u64; cfg.metrics.alphas.len()];
    for o in outcomes {
        let errs = &o.errors[decoder_index];
        let mut image_sum = 0.0;
        for &(dx, dy) in errs {
            let e = dx.hypot(dy);
            n += 1;
            sum_e += e;
            max_e = max_e.max(e);
            sum_abs += dx.abs() + dy.abs();
            sum_dx += dx;
            sum_dy += dy;
            sum_nme += e / o.norm;
            image_sum += e / o.norm;
            for (a, h) in cfg.metrics.alphas.iter().zip(hits.iter_mut()) {
                if e <= a * o.norm {
                    *h += 1;
                }
            }
        }
        if !errs.is_empty() {
            per_image_nme.push(100.0 * image_sum / errs.len() as f64);
        }
    }
    let nf = n.max(1) as f64;
    let nme = if cfg.metrics.per_image_mean {
        per_image_nme.iter().sum::<f64>() / per_image_nme.len().max(1) as f64
    } else {
        100.0 * sum_nme / nf
    };
    let [encoder, predictor, decoder] = axes;
    ReportRow {
        key,
        stride: Some(s.get()),
        encoder: Some(encoder),
        predictor: Some(predictor),
        decoder: Some(decoder),
        samples: n,
        mean_error: sum_e / nf,
        max_error: max_e,
        mean_axis_abs_error: sum_abs / (2.0 * nf),
        bias_x: sum_dx / nf,
        bias_y: sum_dy / nf,
        nme,
        pck: cfg
            .metrics
            .alphas
            .iter()
            .zip(&hits)
            .map(|(a, h)| (*a, *h as f64 / nf))
            .collect(),
    }
}

/// Theorem checks that must hold for an exact predictor without annotation
/// noise, whatever the other sweep axes are.
fn theorem_verdict(
    row: &ReportRow,
    s: Stride,
    encoder: &BaseEncoder,
    predictor: &PredictorKind,
    decoder: Decoder,
    annotated: bool,
) -> Option<OracleVerdict> {
    if !matches!(predictor, PredictorKind::Perfect {}) || annotated {
        return None;
    }
    let lossless = matches!(
        decoder,
        Decoder::Expectation { strategy: ActivationStrategy::TopK { k }, renormalize: true } if k >= 4
    ) || matches!(
        decoder,
        Decoder::Expectation {
            strategy: ActivationStrategy::FourNeighborOfMax | ActivationStrategy::NineNeighborUnion,
            renormalize: true
        }
    );
    let half = rrq_core::Threshold::ROUND;
    let bounded = match (encoder, decoder) {
        (BaseEncoder::Binary { threshold }, Decoder::BiasCorrected(t)) => *threshold == t,
        (BaseEncoder::Binary { threshold }, Decoder::Argmax) => *threshold == half,
        (BaseEncoder::Expected {}, Decoder::Argmax) => true,
        (BaseEncoder::Expected {}, Decoder::BiasCorrected(t)) => t == half,
        _ => false,
    };
    if matches!(encoder, BaseEncoder::Expected {}) && lossless {
        Some(OracleVerdict::new(
            format!("sweep_lossless {}", row.key),
            CheckKind::UpperBound,
            row.max_error,
            0.0,
            EXACT_TOL,
            row.samples,
            false,
        ))
    } else if bounded {
        Some(OracleVerdict::new(
            format!("sweep_theorem1_bound {}", row.key),
            CheckKind::UpperBound,
            row.max_error,
            std::f64::consts::SQRT_2 * s.get() / 2.0,
            EXACT_TOL,
            row.samples,
            false,
        ))
    } else {
        None
    }
}

/// Runs the sweep on a pool of `workers` threads.
pub fn run_sweep(cfg: &ExperimentConfig, workers: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let records = match &cfg.landmarks {
        LandmarkSource::File { path, format } => Some(ingest_landmarks(path, *format)?),
        LandmarkSource::Synthetic { .. } => None,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::config("workers", e.to_string()))?;

    let encoders = cfg.expanded_encoders();
    let decoders = cfg.expanded_decoders();
    let mut rows = Vec::new();
    let mut verdicts = Vec::new();
    for s in cfg.strides() {
        for encoder in &encoders {
            for kind in &cfg.predictors {
                let predictor = PredictorConfig {
                    kind: kind.clone(),
                    base: *encoder,
                };
                let outcomes: Vec<TrialOutcome> = pool.install(|| {
                    (0..cfg.trials)
                        .into_par_iter()
                        .map(|trial| {
                            run_trial(cfg, records.as_deref(), s, &predictor, &decoders, trial)
                        })
                        .collect::<Result<Vec<_>>>()
                })?;
                for (i, decoder) in decoders.iter().enumerate() {
                    let axes = [
                        encoder_label(encoder),
                        predictor_label(kind),
                        decoder.label(),
                    ];
                    let key = format!("s={}|{}|{}|{}", s.get(), axes[0], axes[1], axes[2]);
                    let row = aggregate(key, axes, s, &outcomes, i, cfg);
                    if let Some(v) =
                        theorem_verdict(&row, s, encoder, kind, *decoder, cfg.annotator.is_some())
                    {
                        verdicts.push(v);
                    }
                    rows.push(row);
                }
            }
        }
    }
    let echo = serde_json::to_value(cfg).expect("config serializes");
    Ok(ExperimentReport::new(Some(cfg.seed), echo, rows, verdicts))
}
