//! Fixation subset selection.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaze::fixation::Fixation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", content = "param", rename_all = "snake_case")]
pub enum SubsampleStrategy {
    /// `n` fixations drawn uniformly without replacement.
    RandomN(usize),
    /// The first `n` fixations of every observer's scanpath.
    FirstN(usize),
    /// The last `n` fixations of every observer's scanpath.
    LastN(usize),
    /// Only this observer's fixations.
    Observer(String),
    /// Fixations starting before this (normalized) time.
    BeforeTime(f64),
    /// Fixations starting at or after this (normalized) time.
    AfterTime(f64),
}

impl SubsampleStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            SubsampleStrategy::BeforeTime(t) | SubsampleStrategy::AfterTime(t) if !(*t >= 0.0 && t.is_finite()) => {
                Err(Error::invalid(format!("time threshold must be >= 0, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// Selects a subset of `fixations`; the output keeps input order.
///
/// `Observer` fails with [`Error::NotFound`] when no fixation belongs to the
/// requested observer.
pub fn subsample_fixations(fixations: &[Fixation], strategy: &SubsampleStrategy, seed: u64) -> Result<Vec<Fixation>> {
    if let SubsampleStrategy::Observer(id) = strategy {
        if !fixations.iter().any(|f| &f.observer_id == id) {
            return Err(Error::NotFound(format!("observer '{id}'")));
        }
    }
    select(fixations, strategy, seed)
}

/// Same as [`subsample_fixations`] but an absent observer yields an empty
/// selection. Used per image once observer existence was checked corpus-wide.
pub fn select(fixations: &[Fixation], strategy: &SubsampleStrategy, seed: u64) -> Result<Vec<Fixation>> {
    strategy.validate()?;
    let keep: Vec<bool> = match strategy {
        SubsampleStrategy::RandomN(n) => {
            let mut keep = vec![false; fixations.len()];
            if *n >= fixations.len() {
                keep.fill(true);
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for i in rand::seq::index::sample(&mut rng, fixations.len(), *n) {
                    keep[i] = true;
                }
            }
            keep
        }
        SubsampleStrategy::FirstN(n) => fixations.iter().map(|f| (f.index as usize) < *n).collect(),
        SubsampleStrategy::LastN(n) => {
            let mut counts: HashMap<&str, usize> = HashMap::new();
            for f in fixations {
                *counts.entry(&f.observer_id).or_default() += 1;
            }
            fixations
                .iter()
                .map(|f| f.index as usize + n >= counts[f.observer_id.as_str()])
                .collect()
        }
        SubsampleStrategy::Observer(id) => fixations.iter().map(|f| &f.observer_id == id).collect(),
        SubsampleStrategy::BeforeTime(t) => onsets(fixations)?.iter().map(|o| o < t).collect(),
        SubsampleStrategy::AfterTime(t) => onsets(fixations)?.iter().map(|o| o >= t).collect(),
    };
    Ok(fixations
        .iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(f, _)| f.clone())
        .collect())
}

fn onsets(fixations: &[Fixation]) -> Result<Vec<f64>> {
    fixations
        .iter()
        .map(|f| {
            f.onset
                .ok_or_else(|| Error::invalid("time-based subsampling needs fixation onsets"))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scanpaths() -> Vec<Fixation> {
        let mut v = Vec::new();
        for obs in ["A", "B"] {
            for i in 0..5u32 {
                v.push(Fixation::new(i as f64, 1.0, 100.0, obs, i).with_onset(i as f64 * 0.2));
            }
        }
        v
    }

    #[test]
    fn first_n_saturates() {
        let fx = scanpaths();
        assert_eq!(subsample_fixations(&fx, &SubsampleStrategy::FirstN(99), 0).unwrap(), fx);
        let two = subsample_fixations(&fx, &SubsampleStrategy::FirstN(2), 0).unwrap();
        assert_eq!(two.len(), 4);
        assert!(two.iter().all(|f| f.index < 2));
    }

    #[test]
    fn last_one_is_final_index() {
        let fx: Vec<_> = scanpaths().into_iter().filter(|f| f.observer_id == "A").collect();
        let out = subsample_fixations(&fx, &SubsampleStrategy::LastN(1), 0).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].index, 4);
    }

    #[test]
    fn random_n_is_seeded() {
        let fx = scanpaths();
        let a = subsample_fixations(&fx, &SubsampleStrategy::RandomN(3), 11).unwrap();
        let b = subsample_fixations(&fx, &SubsampleStrategy::RandomN(3), 11).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
        // order preserved relative to input
        let pos: Vec<usize> = a.iter().map(|f| fx.iter().position(|g| g == f).unwrap()).collect();
        assert!(pos.windows(2).all(|w| w[0] < w[1]));
        let all = subsample_fixations(&fx, &SubsampleStrategy::RandomN(50), 11).unwrap();
        assert_eq!(all, fx);
    }

    #[test]
    fn observer_filter_and_missing_observer() {
        let fx = scanpaths();
        let b = subsample_fixations(&fx, &SubsampleStrategy::Observer("B".into()), 0).unwrap();
        assert!(b.len() == 5 && b.iter().all(|f| f.observer_id == "B"));
        let err = subsample_fixations(&fx, &SubsampleStrategy::Observer("Z".into()), 0).unwrap_err();
        assert!(matches!(err, Error::NotFound(_)));
        assert!(select(&fx, &SubsampleStrategy::Observer("Z".into()), 0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn time_windows_partition() {
        let fx = scanpaths();
        let before = subsample_fixations(&fx, &SubsampleStrategy::BeforeTime(0.5), 0).unwrap();
        let after = subsample_fixations(&fx, &SubsampleStrategy::AfterTime(0.5), 0).unwrap();
        assert_eq!(before.len() + after.len(), fx.len());
        assert!(before.iter().all(|f| f.onset.unwrap() < 0.5));
        let mut no_onset = fx.clone();
        no_onset[0].onset = None;
        assert!(subsample_fixations(&no_onset, &SubsampleStrategy::AfterTime(0.5), 0).is_err());
    }
}
