//! Offline scoring of a prediction file against a ground-truth file.

use std::path::Path;

use rrq_core::metrics::{nme, pck, LandmarkSetPair, NormalizationKind};

use crate::config::MetricConfig;
use crate::error::{HarnessError, Result};
use crate::landmarks::{ingest_landmarks, LandmarkFileRecord, LandmarkFormat};
use crate::report::{ExperimentReport, ReportRow};

pub const POOLED_KEY: &str = "pooled";

fn format_for(path: &Path, explicit: Option<LandmarkFormat>) -> Result<LandmarkFormat> {
    explicit
        .or_else(|| LandmarkFormat::from_path(path))
        .ok_or_else(|| {
            HarnessError::config(
                "format",
                format!("cannot infer landmark format of {}", path.display()),
            )
        })
}

/// Normalization for one record: the configured kind, else the record's
/// face box.
fn record_norm(metrics: &MetricConfig, gt: &LandmarkFileRecord) -> Result<NormalizationKind> {
    match (metrics.normalization, gt.bbox) {
        (Some(kind), _) => Ok(kind),
        (None, Some([_, _, w, h])) => Ok(NormalizationKind::BBoxSqrt { w, h }),
        (None, None) => Err(HarnessError::config(
            "metrics.normalization",
            format!(
                "record {:?} has no bbox and no normalization was given",
                gt.image_id
            ),
        )),
    }
}

struct Scored {
    errors: Vec<f64>,
    norm: f64,
}

pub fn evaluate_predictions(
    pred_path: &Path,
    gt_path: &Path,
    metrics: &MetricConfig,
    format: Option<LandmarkFormat>,
) -> Result<ExperimentReport> {
    let preds = ingest_landmarks(pred_path, format_for(pred_path, format)?)?;
    let gts = ingest_landmarks(gt_path, format_for(gt_path, format)?)?;
    if preds.len() != gts.len() {
        return Err(HarnessError::CountMismatch(format!(
            "{} prediction records vs {} ground-truth records",
            preds.len(),
            gts.len()
        )));
    }

    let mut rows = Vec::with_capacity(gts.len() + 1);
    let mut scored = Vec::with_capacity(gts.len());
    for (p, g) in preds.iter().zip(&gts) {
        if p.image_id != g.image_id {
            return Err(HarnessError::CountMismatch(format!(
                "record order differs: prediction {:?} vs ground truth {:?}",
                p.image_id, g.image_id
            )));
        }
        if p.landmarks.len() != g.landmarks.len() {
            return Err(HarnessError::CountMismatch(format!(
                "record {:?}: {} predicted landmarks vs {} ground-truth landmarks",
                g.image_id,
                p.landmarks.len(),
                g.landmarks.len()
            )));
        }
        let mut pair = LandmarkSetPair::new(p.points(), g.points())?;
        if let Some(v) = &g.visible {
            pair = pair.with_visibility(v.clone())?;
        }
        let kind = record_norm(metrics, g)?;
        let norm = kind.distance(pair.ground_truth())?;
        let errors = pair.visible_errors();
        let pck_row = metrics
            .alphas
            .iter()
            .map(|&a| Ok((a, pck(&pair, norm, a)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut row = summary_row(g.image_id.clone(), &errors, &pair);
        row.nme = nme(&pair, kind)?;
        row.pck = pck_row;
        rows.push(row);
        scored.push(Scored { errors, norm });
    }

    rows.push(pooled_row(&rows, &scored, metrics));
    let echo = serde_json::json!({
        "pred": pred_path,
        "gt": gt_path,
        "metrics": metrics,
    });
    Ok(ExperimentReport::new(None, echo, rows, Vec::new()))
}

fn summary_row(key: String, errors: &[f64], pair: &LandmarkSetPair) -> ReportRow {
    let n = errors.len();
    let (mut dx, mut dy, mut abs) = (0.0, 0.0, 0.0);
    for i in (0..pair.len()).filter(|&i| pair.is_visible(i)) {
        let (p, g) = (pair.predictions()[i], pair.ground_truth()[i]);
        dx += p.x - g.x;
        dy += p.y - g.y;
        abs += (p.x - g.x).abs() + (p.y - g.y).abs();
    }
    let nf = n.max(1) as f64;
    ReportRow {
        key,
        stride: None,
        encoder: None,
        predictor: None,
        decoder: None,
        samples: n as u64,
        mean_error: errors.iter().sum::<f64>() / nf,
        max_error: errors.iter().copied().fold(0.0, f64::max),
        mean_axis_abs_error: abs / (2.0 * nf),
        bias_x: dx / nf,
        bias_y: dy / nf,
        nme: 0.0,
        pck: Vec::new(),
    }
}

fn pooled_row(rows: &[ReportRow], scored: &[Scored], metrics: &MetricConfig) -> ReportRow {
    let n: u64 = rows.iter().map(|r| r.samples).sum();
    let nf = n.max(1) as f64;
    let weighted =
        |f: fn(&ReportRow) -> f64| rows.iter().map(|r| f(r) * r.samples as f64).sum::<f64>() / nf;
    let nme = if metrics.per_image_mean {
        rows.iter().map(|r| r.nme).sum::<f64>() / rows.len().max(1) as f64
    } else {
        100.0
            * scored
                .iter()
                .flat_map(|s| s.errors.iter().map(move |e| e / s.norm))
                .sum::<f64>()
            / nf
    };
    let pck = metrics
        .alphas
        .iter()
        .map(|&a| {
            let hits = scored
                .iter()
                .flat_map(|s| s.errors.iter().map(move |e| *e <= a * s.norm))
                .filter(|hit| *hit)
                .count();
            (a, hits as f64 / nf)
        })
        .collect();
    ReportRow {
        key: POOLED_KEY.to_string(),
        stride: None,
        encoder: None,
        predictor: None,
        decoder: None,
        samples: n,
        mean_error: weighted(|r| r.mean_error),
        max_error: rows.iter().map(|r| r.max_error).fold(0.0, f64::max),
        mean_axis_abs_error: weighted(|r| r.mean_axis_abs_error),
        bias_x: weighted(|r| r.bias_x),
        bias_y: weighted(|r| r.bias_y),
        nme,
        pck,
    }
}
