use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::Deserialize;

use super::ConfigError;
use crate::tracker::Detection;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetection {
    frame: i64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
    score: f64,
    #[serde(default)]
    truth_id: Option<u64>,
}

/// Parses a JSON Lines detection stream. Blank lines are skipped; the result
/// is stably sorted by frame.
pub fn parse_detections<R: BufRead>(reader: R) -> Result<Vec<Detection>, ConfigError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| ConfigError::MalformedLine {
            line: lineno,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDetection =
            serde_json::from_str(&line).map_err(|e| ConfigError::MalformedLine {
                line: lineno,
                detail: e.to_string(),
            })?;
        if raw.frame < 0 {
            return Err(ConfigError::InvalidRecord {
                line: lineno,
                field: "frame".into(),
                reason: format!("negative frame {}", raw.frame),
            });
        }
        let d = Detection {
            frame: raw.frame as u64,
            cx: raw.cx,
            cy: raw.cy,
            w: raw.w,
            h: raw.h,
            score: raw.score,
            truth_id: raw.truth_id,
        };
        if let Some(field) = d.invalid_field() {
            return Err(ConfigError::InvalidRecord {
                line: lineno,
                field: field.into(),
                reason: "out of range".into(),
            });
        }
        out.push(d);
    }
    out.sort_by_key(|d| d.frame);
    Ok(out)
}

pub fn read_detections(path: impl AsRef<Path>) -> Result<Vec<Detection>, ConfigError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ConfigError::io(path, e))?;
    parse_detections(BufReader::new(file))
}

/// One canonical JSON object per line.
pub fn write_detections_to<W: Write>(mut w: W, detections: &[Detection]) -> std::io::Result<()> {
    for d in detections {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_detections(
    path: impl AsRef<Path>,
    detections: &[Detection],
) -> Result<(), ConfigError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ConfigError::io(path, e))?;
    write_detections_to(BufWriter::new(file), detections).map_err(|e| ConfigError::io(path, e))
}
