//! Landmark annotation files.
//!
//! CSV: header `image_id,x0,y0,x1,y1,...`, optionally followed by
//! `bbox_x,bbox_y,bbox_w,bbox_h` and visibility flags `v0,v1,...` (0/1).
//! JSON: an array of [`LandmarkFileRecord`] objects.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use rrq_core::ContinuousPoint;

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum LandmarkFormat {
    Json,
    Csv,
}

impl LandmarkFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "json" => Some(Self::Json),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LandmarkFileRecord {
    pub image_id: String,
    /// `[x, y]` pairs in image pixels.
    pub landmarks: Vec<[f64; 2]>,
    /// `[x, y, w, h]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visible: Option<Vec<bool>>,
}

impl LandmarkFileRecord {
    pub fn points(&self) -> Vec<ContinuousPoint> {
        self.landmarks
            .iter()
            .map(|[x, y]| ContinuousPoint::new(*x, *y))
            .collect()
    }
}

pub fn ingest_landmarks(path: &Path, format: LandmarkFormat) -> Result<Vec<LandmarkFileRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    if text.trim().is_empty() {
        return Err(HarnessError::EmptyInput(path.to_path_buf()));
    }
    let records =
        match format {
            LandmarkFormat::Json => serde_json::from_str::<Vec<LandmarkFileRecord>>(&text)
                .map_err(|e| HarnessError::Parse {
                    path: path.to_path_buf(),
                    message: e.to_string(),
                })?,
            LandmarkFormat::Csv => parse_csv(path, &text)?,
        };
    if records.is_empty() {
        return Err(HarnessError::EmptyInput(path.to_path_buf()));
    }
    validate(path, &records)?;
    Ok(records)
}

fn schema(path: &Path, row: usize, message: impl Into<String>) -> HarnessError {
    HarnessError::Schema {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

struct CsvLayout {
    id: usize,
    coords: Vec<(usize, usize)>,
    bbox: Option<[usize; 4]>,
    visible: Option<Vec<usize>>,
}

fn layout(path: &Path, header: &csv::StringRecord) -> Result<CsvLayout> {
    let cols: HashMap<&str, usize> = header
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim(), i))
        .collect();
    if cols.len() != header.len() {
        return Err(schema(path, 0, "duplicate header column"));
    }
    let id = *cols
        .get("image_id")
        .ok_or_else(|| schema(path, 0, "missing `image_id` column"))?;
    let mut coords = Vec::new();
    while let (Some(x), Some(y)) = (
        cols.get(format!("x{}", coords.len()).as_str()),
        cols.get(format!("y{}", coords.len()).as_str()),
    ) {
        coords.push((*x, *y));
    }
    if coords.is_empty() {
        return Err(schema(path, 0, "no `x0,y0` landmark columns"));
    }
    let bbox = match ["bbox_x", "bbox_y", "bbox_w", "bbox_h"].map(|c| cols.get(c).copied()) {
        [Some(a), Some(b), Some(c), Some(d)] => Some([a, b, c, d]),
        [None, None, None, None] => None,
        _ => {
            return Err(schema(
                path,
                0,
                "bbox needs all of bbox_x,bbox_y,bbox_w,bbox_h",
            ))
        }
    };
    let visible = if cols.contains_key("v0") {
        let v: Option<Vec<usize>> = (0..coords.len())
            .map(|i| cols.get(format!("v{i}").as_str()).copied())
            .collect();
        Some(v.ok_or_else(|| schema(path, 0, "visibility needs one `v<i>` column per landmark"))?)
    } else {
        None
    };
    let used = 1 + 2 * coords.len() + bbox.map_or(0, |_| 4) + visible.as_ref().map_or(0, Vec::len);
    if used != header.len() {
        return Err(schema(path, 0, "unrecognised header column"));
    }
    Ok(CsvLayout {
        id,
        coords,
        bbox,
        visible,
    })
}

fn parse_csv(path: &Path, text: &str) -> Result<Vec<LandmarkFileRecord>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| HarnessError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?
        .clone();
    let layout = layout(path, &header)?;
    let mut records = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        let row = row.map_err(|e| schema(path, row_no, e.to_string()))?;
        if row.len() != header.len() {
            let found = row.len().saturating_sub(1) / 2;
            return Err(HarnessError::InconsistentCount {
                path: path.to_path_buf(),
                row: row_no,
                expected: layout.coords.len(),
                found,
            });
        }
        let num = |col: usize| -> Result<f64> {
            let raw = row[col].trim();
            raw.parse::<f64>().map_err(|_| {
                schema(
                    path,
                    row_no,
                    format!("column `{}`: `{raw}` is not a number", &header[col]),
                )
            })
        };
        let mut landmarks = Vec::with_capacity(layout.coords.len());
        for &(x, y) in &layout.coords {
            landmarks.push([num(x)?, num(y)?]);
        }
        let bbox = match layout.bbox {
            Some(cols) => Some([num(cols[0])?, num(cols[1])?, num(cols[2])?, num(cols[3])?]),
            None => None,
        };
        let visible = match &layout.visible {
            Some(cols) => Some(
                cols.iter()
                    .map(|&c| match row[c].trim() {
                        "1" | "true" => Ok(true),
                        "0" | "false" => Ok(false),
                        other => Err(schema(
                            path,
                            row_no,
                            format!("visibility `{other}` is not 0/1"),
                        )),
                    })
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        };
        records.push(LandmarkFileRecord {
            image_id: row[layout.id].to_string(),
            landmarks,
            bbox,
            visible,
        });
    }
    Ok(records)
}

fn validate(path: &Path, records: &[LandmarkFileRecord]) -> Result<()> {
    let k = records[0].landmarks.len();
    for (i, r) in records.iter().enumerate() {
        let row = i + 1;
        if r.landmarks.len() != k {
            return Err(HarnessError::InconsistentCount {
                path: path.to_path_buf(),
                row,
                expected: k,
                found: r.landmarks.len(),
            });
        }
        if k == 0 {
            return Err(schema(path, row, "record has no landmarks"));
        }
        for (j, [x, y]) in r.landmarks.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(schema(
                    path,
                    row,
                    format!("landmark {j} is not finite ({x}, {y})"),
                ));
            }
            if *x < 0.0 || *y < 0.0 {
                return Err(schema(
                    path,
                    row,
                    format!("landmark {j} is negative ({x}, {y})"),
                ));
            }
        }
        if let Some(b) = r.bbox {
            if b.iter().any(|v| !v.is_finite()) || b[2] <= 0.0 || b[3] <= 0.0 {
                return Err(schema(path, row, format!("invalid bbox {b:?}")));
            }
        }
        if let Some(v) = &r.visible {
            if v.len() != k {
                return Err(schema(
                    path,
                    row,
                    "visibility length differs from landmark count",
                ));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(ext: &str, body: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::Builder::new().suffix(ext).tempfile().unwrap();
        f.write_all(body.as_bytes()).unwrap();
        f
    }

    #[test]
    fn csv_two_records() {
        let f = file(
            ".csv",
            "image_id,x0,y0,x1,y1,x2,y2,x3,y3,x4,y4\n\
             a,1,2,3,4,5,6,7,8,9,10\n\
             b,1.5,2.5,3,4,5,6,7,8,9,10\n",
        );
        let recs = ingest_landmarks(f.path(), LandmarkFormat::Csv).unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.landmarks.len() == 5));
        assert_eq!(recs[1].landmarks[0], [1.5, 2.5]);
        assert_eq!(recs[0].image_id, "a");
    }

    #[test]
    fn csv_nan_names_row() {
        let f = file(".csv", "image_id,x0,y0\na,1,2\nb,nan,2\n");
        match ingest_landmarks(f.path(), LandmarkFormat::Csv) {
            Err(HarnessError::Schema { row, message, .. }) => {
                assert_eq!(row, 2);
                assert!(message.contains("not finite"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_negative_and_garbage() {
        let f = file(".csv", "image_id,x0,y0\na,-1,2\n");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Csv),
            Err(HarnessError::Schema { row: 1, .. })
        ));
        let f = file(".csv", "image_id,x0,y0\na,abc,2\n");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Csv),
            Err(HarnessError::Schema { row: 1, .. })
        ));
    }

    #[test]
    fn csv_short_row() {
        let f = file(".csv", "image_id,x0,y0,x1,y1\na,1,2,3,4\nb,1,2\n");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Csv),
            Err(HarnessError::InconsistentCount {
                row: 2,
                expected: 2,
                found: 1,
                ..
            })
        ));
    }

    #[test]
    fn csv_bbox_and_visibility() {
        let f = file(
            ".csv",
            "image_id,x0,y0,x1,y1,bbox_x,bbox_y,bbox_w,bbox_h,v0,v1\na,1,2,3,4,0,0,10,20,1,0\n",
        );
        let recs = ingest_landmarks(f.path(), LandmarkFormat::Csv).unwrap();
        assert_eq!(recs[0].bbox, Some([0.0, 0.0, 10.0, 20.0]));
        assert_eq!(recs[0].visible, Some(vec![true, false]));
    }

    #[test]
    fn csv_bad_header() {
        let f = file(".csv", "id,x0,y0\na,1,2\n");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Csv),
            Err(HarnessError::Schema { row: 0, .. })
        ));
        let f = file(".csv", "image_id,x0,y0,zzz\na,1,2,3\n");
        assert!(ingest_landmarks(f.path(), LandmarkFormat::Csv).is_err());
    }

    #[test]
    fn empty_inputs() {
        let f = file(".csv", "");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Csv),
            Err(HarnessError::EmptyInput(_))
        ));
        let f = file(".csv", "image_id,x0,y0\n");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Csv),
            Err(HarnessError::EmptyInput(_))
        ));
        let f = file(".json", "[]");
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Json),
            Err(HarnessError::EmptyInput(_))
        ));
    }

    #[test]
    fn json_records() {
        let f = file(
            ".json",
            r#"[{"image_id": "a", "landmarks": [[1, 2], [3, 4]], "bbox": [0, 0, 5, 5]},
                {"image_id": "b", "landmarks": [[1, 2], [3, 4]], "visible": [true, false]}]"#,
        );
        let recs = ingest_landmarks(f.path(), LandmarkFormat::Json).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].visible, Some(vec![true, false]));

        let f = file(
            ".json",
            r#"[{"image_id": "a", "landmarks": [[1, 2], [3, 4]]}, {"image_id": "b", "landmarks": [[1, 2]]}]"#,
        );
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Json),
            Err(HarnessError::InconsistentCount { row: 2, .. })
        ));
        let f = file(
            ".json",
            r#"[{"image_id": "a", "landmarks": [[1, 2]], "extra": 1}]"#,
        );
        assert!(matches!(
            ingest_landmarks(f.path(), LandmarkFormat::Json),
            Err(HarnessError::Parse { .. })
        ));
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(
            LandmarkFormat::from_path(Path::new("a.csv")),
            Some(LandmarkFormat::Csv)
        );
        assert_eq!(LandmarkFormat::from_path(Path::new("a.JSON")), None);
    }
}
