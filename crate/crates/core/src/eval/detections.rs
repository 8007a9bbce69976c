//! Detection interchange files: one JSON object per line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class: String,
    pub bbox: BBox,
    pub score: f64,
}

pub fn write_detections<W: Write>(mut w: W, records: &[DetectionRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r).map_err(|e| Error::parse("detection record", e))?;
        writeln!(w, "{line}").map_err(|e| Error::io("<detections>", e))?;
    }
    w.flush().map_err(|e| Error::io("<detections>", e))
}

/// Reads records, skipping blank lines. Errors carry the 1-based line number.
pub fn read_detections<R: BufRead>(r: R) -> Result<Vec<DetectionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<detections>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DetectionRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(format!("detections line {}", i + 1), e))?;
        out.push(rec);
    }
    Ok(out)
}
