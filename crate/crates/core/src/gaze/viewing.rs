//! Per-observer viewing-time normalization.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::gaze::fixation::{Fixation, FixationRecord};

/// Images of each class viewed first by an observer that are left out of
/// the mean viewing time.
pub const WARMUP_VIEWS_PER_CLASS: usize = 3;

/// One observer looking at one image.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub image_id: String,
    pub class: String,
    pub fixations: Vec<Fixation>,
}

impl View {
    /// End time of the last fixation of the scanpath.
    pub fn viewing_time(&self, observer: &str) -> Result<f64> {
        let last = self.fixations.iter().max_by_key(|f| f.index).ok_or_else(|| {
            Error::Data(format!(
                "observer '{observer}' has an empty view of '{}'",
                self.image_id
            ))
        })?;
        last.end().ok_or_else(|| {
            Error::Data(format!(
                "observer '{observer}' on '{}': onset and duration required",
                self.image_id
            ))
        })
    }
}

/// All views of one observer, in viewing order.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverSessions {
    pub observer_id: String,
    pub views: Vec<View>,
}

/// Mean viewing time of an observer, skipping the first views of each class.
pub fn mean_viewing_time(sessions: &ObserverSessions) -> Result<f64> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut total = 0.0;
    let mut count = 0usize;
    for view in &sessions.views {
        let n = seen.entry(&view.class).or_default();
        *n += 1;
        if *n <= WARMUP_VIEWS_PER_CLASS {
            continue;
        }
        total += view.viewing_time(&sessions.observer_id)?;
        count += 1;
    }
    if count == 0 || total <= 0.0 {
        return Err(Error::Data(format!(
            "observer '{}' has no images eligible for viewing-time normalization",
            sessions.observer_id
        )));
    }
    Ok(total / count as f64)
}

/// Divides every onset and duration of each observer by that observer's
/// mean viewing time. Returns the normalized corpus and the means used.
pub fn normalize_viewing_times(corpus: &[ObserverSessions]) -> Result<(Vec<ObserverSessions>, HashMap<String, f64>)> {
    let mut means = HashMap::new();
    let mut out = Vec::with_capacity(corpus.len());
    for sessions in corpus {
        let mean = mean_viewing_time(sessions)?;
        means.insert(sessions.observer_id.clone(), mean);
        let views = sessions
            .views
            .iter()
            .map(|v| View {
                fixations: v
                    .fixations
                    .iter()
                    .map(|f| Fixation {
                        onset: f.onset.map(|t| t / mean),
                        duration: f.duration.map(|d| d / mean),
                        ..f.clone()
                    })
                    .collect(),
                ..v.clone()
            })
            .collect();
        out.push(ObserverSessions {
            observer_id: sessions.observer_id.clone(),
            views,
        });
    }
    Ok((out, means))
}

/// Builds per-observer sessions from a fixation log. Viewing order is the
/// order in which (observer, image) pairs first appear in the log; the class
/// of an image is looked up in `class_of` (empty string when absent).
pub fn sessions_from_records(records: &[FixationRecord], class_of: &HashMap<String, String>) -> Vec<ObserverSessions> {
    let mut order: Vec<String> = Vec::new();
    let mut by_observer: HashMap<String, ObserverSessions> = HashMap::new();
    let mut view_slot: HashMap<(String, String), usize> = HashMap::new();
    for r in records {
        let obs = &r.fixation.observer_id;
        let sessions = by_observer.entry(obs.clone()).or_insert_with(|| {
            order.push(obs.clone());
            ObserverSessions {
                observer_id: obs.clone(),
                views: Vec::new(),
            }
        });
        let key = (obs.clone(), r.image_id.clone());
        let slot = *view_slot.entry(key).or_insert_with(|| {
            sessions.views.push(View {
                image_id: r.image_id.clone(),
                class: class_of.get(&r.image_id).cloned().unwrap_or_default(),
                fixations: Vec::new(),
            });
            sessions.views.len() - 1
        });
        sessions.views[slot].fixations.push(r.fixation.clone());
    }
    order
        .into_iter()
        .map(|o| by_observer.remove(&o).expect("observer registered"))
        .collect()
}

/// Flattens sessions back into log records (observer-major order).
pub fn records_from_sessions(corpus: &[ObserverSessions]) -> Vec<FixationRecord> {
    corpus
        .iter()
        .flat_map(|s| {
            s.views.iter().flat_map(|v| {
                v.fixations.iter().map(move |f| FixationRecord {
                    image_id: v.image_id.clone(),
                    fixation: f.clone(),
                })
            })
        })
        .collect()
}
