//! Fixation records and the CSV fixation log format.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One gaze fixation on an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fixation {
    /// Horizontal position in image pixels.
    pub x: f64,
    /// Vertical position in image pixels.
    pub y: f64,
    /// Duration in milliseconds. `None` when the log has no duration.
    pub duration: Option<f64>,
    pub observer_id: String,
    /// Position in this observer's scanpath on the image, from 0.
    pub index: u32,
    /// Milliseconds from stimulus onset.
    pub onset: Option<f64>,
}

impl Fixation {
    pub fn new(x: f64, y: f64, duration: f64, observer_id: &str, index: u32) -> Self {
        Fixation {
            x,
            y,
            duration: Some(duration),
            observer_id: observer_id.to_string(),
            index,
            onset: None,
        }
    }

    pub fn with_onset(mut self, onset: f64) -> Self {
        self.onset = Some(onset);
        self
    }

    /// End of the fixation, when both onset and duration are known.
    pub fn end(&self) -> Option<f64> {
        Some(self.onset? + self.duration?)
    }
}

/// A fixation tagged with the image it belongs to; one row of the log.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRecord {
    pub image_id: String,
    pub fixation: Fixation,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    image_id: String,
    observer_id: String,
    index: u32,
    x: f64,
    y: f64,
    duration_ms: Option<f64>,
    onset_ms: Option<f64>,
}

/// Image sizes keyed by image id, used for bounds checks.
pub type ImageDims = HashMap<String, (usize, usize)>;

/// Parses a fixation log.
///
/// Rows are validated for finite coordinates, positive durations and
/// consecutive scanpath indices per (image, observer). When `dims` is given,
/// rows referencing unknown images or lying outside the image are rejected.
pub fn read_fixations<R: Read>(reader: R, dims: Option<&ImageDims>) -> Result<Vec<FixationRecord>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (line, row) in rdr.deserialize::<Row>().enumerate() {
        let ctx = || format!("fixation row {}", line + 1);
        let row = row.map_err(|e| Error::parse(ctx(), e))?;
        if !row.x.is_finite() || !row.y.is_finite() {
            return Err(Error::parse(ctx(), "non-finite coordinate"));
        }
        if let Some(d) = row.duration_ms {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::parse(ctx(), format!("duration must be > 0, got {d}")));
            }
        }
        if let Some(t) = row.onset_ms {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::parse(ctx(), format!("onset must be >= 0, got {t}")));
            }
        }
        if let Some(dims) = dims {
            let &(w, h) = dims
                .get(&row.image_id)
                .ok_or_else(|| Error::parse(ctx(), format!("unknown image '{}'", row.image_id)))?;
            if !(row.x >= 0.0 && row.x < w as f64 && row.y >= 0.0 && row.y < h as f64) {
                return Err(Error::parse(
                    ctx(),
                    format!("({}, {}) outside {}x{} image '{}'", row.x, row.y, w, h, row.image_id),
                ));
            }
        }
        out.push(FixationRecord {
            image_id: row.image_id,
            fixation: Fixation {
                x: row.x,
                y: row.y,
                duration: row.duration_ms,
                observer_id: row.observer_id,
                index: row.index,
                onset: row.onset_ms,
            },
        });
    }
    check_indices(&out)?;
    Ok(out)
}

fn check_indices(records: &[FixationRecord]) -> Result<()> {
    let mut groups: HashMap<(&str, &str), Vec<u32>> = HashMap::new();
    for r in records {
        groups
            .entry((&r.image_id, &r.fixation.observer_id))
            .or_default()
            .push(r.fixation.index);
    }
    for ((image, observer), mut idx) in groups {
        idx.sort_unstable();
        if idx.iter().enumerate().any(|(i, &v)| v as usize != i) {
            return Err(Error::parse(
                "fixation log",
                format!("indices of observer '{observer}' on image '{image}' are not consecutive from 0"),
            ));
        }
    }
    Ok(())
}

pub fn write_fixations<W: Write>(writer: W, records: &[FixationRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for r in records {
        let f = &r.fixation;
        wtr.serialize(Row {
            image_id: r.image_id.clone(),
            observer_id: f.observer_id.clone(),
            index: f.index,
            x: f.x,
            y: f.y,
            duration_ms: f.duration,
            onset_ms: f.onset,
        })
        .map_err(|e| Error::parse("fixation log", e))?;
    }
    wtr.flush().map_err(|e| Error::io("<fixation writer>", e))?;
    Ok(())
}

/// Groups records by image id, preserving file order within each image.
pub fn group_by_image(records: &[FixationRecord]) -> BTreeMap<String, Vec<Fixation>> {
    let mut map: BTreeMap<String, Vec<Fixation>> = BTreeMap::new();
    for r in records {
        map.entry(r.image_id.clone()).or_default().push(r.fixation.clone());
    }
    map
}

/// Flattens a per-image grouping back into records, images in key order.
pub fn flatten(groups: &BTreeMap<String, Vec<Fixation>>) -> Vec<FixationRecord> {
    groups
        .iter()
        .flat_map(|(id, fx)| {
            fx.iter().map(move |f| FixationRecord {
                image_id: id.clone(),
                fixation: f.clone(),
            })
        })
        .collect()
}
