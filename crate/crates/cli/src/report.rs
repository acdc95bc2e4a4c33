//! Report rows, serialization and atomic output.
//!
//! CSV columns, in order:
//!
//! | column | meaning |
//! |--------|---------|
//! | `key` | `stride|encoder|predictor|decoder`, or the record id for `evaluate` |
//! | `stride` | pixels per cell (empty for `evaluate`) |
//! | `encoder`, `predictor`, `decoder` | sweep axes (empty for `evaluate`) |
//! | `samples` | landmarks aggregated into the row |
//! | `mean_error`, `max_error` | Euclidean localization error in pixels |
//! | `mean_axis_abs_error` | mean of `|dx|` and `|dy|` in pixels |
//! | `bias_x`, `bias_y` | mean signed error per axis in pixels |
//! | `nme` | normalized mean error in percent |
//! | `pck@<alpha>` | one column per configured alpha |

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use rrq_core::oracle::OracleVerdict;

use crate::config::ReportFormat;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub key: String,
    pub stride: Option<f64>,
    pub encoder: Option<String>,
    pub predictor: Option<String>,
    pub decoder: Option<String>,
    pub samples: u64,
    pub mean_error: f64,
    pub max_error: f64,
    pub mean_axis_abs_error: f64,
    pub bias_x: f64,
    pub bias_y: f64,
    pub nme: f64,
    /// `(alpha, fraction)` pairs.
    pub pck: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub seed: Option<u64>,
    pub version: String,
    /// Unix seconds; the only field allowed to differ between identical runs.
    pub generated_at: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub environment: Environment,
    pub config_hash: String,
    /// SHA-256 of the CSV rendering of `rows`.
    pub body_hash: String,
    pub config: serde_json::Value,
    pub rows: Vec<ReportRow>,
    pub verdicts: Vec<OracleVerdict>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl ExperimentReport {
    pub fn new(
        seed: Option<u64>,
        config: serde_json::Value,
        rows: Vec<ReportRow>,
        verdicts: Vec<OracleVerdict>,
    ) -> Self {
        let config_hash = sha256_hex(config.to_string().as_bytes());
        let body_hash = sha256_hex(&rows_to_csv(&rows));
        Self {
            environment: Environment {
                seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                generated_at: unix_now(),
            },
            config_hash,
            body_hash,
            config,
            rows,
            verdicts,
        }
    }

    pub fn all_verdicts_pass(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn render(&self, format: ReportFormat) -> Vec<u8> {
        match format {
            ReportFormat::Csv => rows_to_csv(&self.rows),
            ReportFormat::Json => {
                let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
                out.push(b'\n');
                out
            }
        }
    }

    /// Writes to a temporary file next to `path`, then renames it into place.
    pub fn write(&self, path: &Path, format: ReportFormat) -> Result<()> {
        write_atomic(path, &self.render(format))
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes)
        .map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path)
        .map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = [
        "key",
        "stride",
        "encoder",
        "predictor",
        "decoder",
        "samples",
        "mean_error",
        "max_error",
        "mean_axis_abs_error",
        "bias_x",
        "bias_y",
        "nme",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Some(first) = rows.first() {
        header.extend(first.pck.iter().map(|(a, _)| format!("pck@{a}")));
    }
    w.write_record(&header).expect("in-memory write");
    for r in rows {
        let mut rec = vec![
            r.key.clone(),
            opt(&r.stride),
            opt(&r.encoder),
            opt(&r.predictor),
            opt(&r.decoder),
            r.samples.to_string(),
            r.mean_error.to_string(),
            r.max_error.to_string(),
            r.mean_axis_abs_error.to_string(),
            r.bias_x.to_string(),
            r.bias_y.to_string(),
            r.nme.to_string(),
        ];
        rec.extend(r.pck.iter().map(|(_, v)| v.to_string()));
        w.write_record(&rec).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
