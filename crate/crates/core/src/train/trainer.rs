use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dpm::{detect_in_pyramid, Model, PaddedPyramid, DEFAULT_NMS_OVERLAP};
use crate::error::{Error, Result};
use crate::eval::{evaluate_detections, GroundTruthBox, ScoredBox, DEFAULT_MATCH_IOU};
use crate::features::build_detection_pyramid;
use crate::gaze::DensityMap;
use crate::geometry::BBox;
use crate::raster::Raster;
use crate::train::config::TrainConfig;
use crate::train::init::{init_components, init_parts, WarpSource};
use crate::train::latent::{
    mine_negatives, relabel_positives, HardNegative, Mining, Placement, TrainImage, WindowExample,
};
use crate::train::sgd::{example_score, model_params, optimize_convex, set_model_params, squared_norm, ParamLayout};

/// Score threshold used when measuring validation AP during training.
const VALIDATION_THRESHOLD: f64 = -3.0;

/// An image given to the trainer.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub image: Raster,
    /// One map per gaze channel of the model.
    pub density_maps: Vec<DensityMap>,
    /// Non-difficult boxes of the class. Negatives have none.
    pub boxes: Vec<BBox>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Root filters only.
    Warmup,
    /// Roots with parts.
    Parts,
}

/// What happened in one relabel / mine / solve round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTelemetry {
    pub phase: Phase,
    pub round: usize,
    /// Exact objective after relabelling positives, before solving.
    pub objective_before: f64,
    /// Exact objective of the model leaving this round.
    pub objective: f64,
    /// Whether a new solution was accepted (otherwise the model is unchanged).
    pub accepted: bool,
    pub inner_iterations: usize,
    pub sgd_epochs: usize,
    pub positives_used: usize,
    pub positives_infeasible: usize,
    /// Negative windows at or above the margin under the leaving model.
    pub hard_negatives: usize,
    pub cache_entries: usize,
    pub cache_cells: usize,
    pub validation_ap: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub telemetry: Vec<RoundTelemetry>,
}

struct Prepared {
    positives: Vec<TrainImage>,
    negatives: Vec<TrainImage>,
    validation: Vec<TrainImage>,
}

fn prepare(samples: &[TrainSample], model: &Model) -> Result<Vec<TrainImage>> {
    let pad = model.padding();
    samples
        .par_iter()
        .map(|s| {
            if s.density_maps.len() != model.gaze_channels {
                return Err(Error::invalid(format!(
                    "image '{}' has {} density maps, the model expects {}",
                    s.id,
                    s.density_maps.len(),
                    model.gaze_channels
                )));
            }
            let pyr = build_detection_pyramid(
                &s.image,
                &s.density_maps,
                model.cell_size,
                model.levels_per_octave,
                model.min_root_cells(),
            )?;
            Ok(TrainImage {
                id: s.id.clone(),
                pyramid: PaddedPyramid::new(&pyr, pad),
                boxes: s.boxes.clone(),
            })
        })
        .collect()
}

/// Training state carried between rounds.
struct State<'a> {
    model: Model,
    config: &'a TrainConfig,
    data: &'a Prepared,
    /// Mining of the current model, if already computed.
    mined: Option<Mining>,
    /// Negative windows the solver keeps seeing across the rounds of a
    /// phase, including ones that are currently easy.
    working: CacheGroups,
}

type CacheKey = (usize, usize, usize, (i64, i64));

fn cache_key(h: &HardNegative) -> CacheKey {
    (h.image, h.placement.component, h.placement.level, h.placement.root)
}

impl State<'_> {
    fn mining(&mut self) -> Result<&Mining> {
        if self.mined.is_none() {
            self.mined = Some(mine_negatives(
                &self.model,
                &self.data.negatives,
                self.config.negative_cache_cells,
            )?);
        }
        Ok(self.mined.as_ref().expect("just mined"))
    }

    /// One round: relabel positives, then solve and re-mine until the exact
    /// objective does not rise above its value before the round (within the
    /// tolerance) or the inner budget is spent. Each solve starts from the
    /// previous candidate and sees the working set: every hard negative
    /// found so far in the phase, up to the cache budget, hardest first.
    fn round(&mut self, phase: Phase, round: usize) -> Result<RoundTelemetry> {
        let cfg = self.config;
        // Shapes and anchors do not change within a round.
        let shapes = self.model.clone();
        let layout = ParamLayout::for_model(&shapes);
        let beta = model_params(&shapes);

        let labels = relabel_positives(&shapes, &self.data.positives, cfg.min_overlap)?;
        let owners = self
            .data
            .positives
            .iter()
            .enumerate()
            .flat_map(|(i, img)| std::iter::repeat_n(i, img.boxes.len()));
        let mut positives = Vec::new();
        for (i, label) in owners.zip(labels.iter()) {
            if let Some(p) = label {
                positives.push(WindowExample::new(
                    &shapes,
                    &self.data.positives[i].pyramid,
                    vec![p.clone()],
                    1.0,
                )?);
            }
        }
        let infeasible = labels.len() - positives.len();
        if positives.is_empty() {
            return Err(Error::Data(format!(
                "no positive box can be covered by a root window at IoU >= {}",
                cfg.min_overlap
            )));
        }
        let pos_hinge = |beta: &[f64]| -> f64 {
            positives
                .iter()
                .map(|e| (1.0 - example_score(beta, &layout, e)).max(0.0))
                .sum()
        };
        let negatives = &self.data.negatives;

        let before = squared_norm(&beta) + cfg.c * (pos_hinge(&beta) + self.mining()?.hinge);
        let fresh = self.mining()?.cache.clone();
        let mut cache = std::mem::take(&mut self.working);
        cache.add(fresh);
        let mut current = beta;
        let mut accepted = false;
        let mut objective = before;
        let mut inner = 0;
        let mut epochs = 0;
        while inner < cfg.max_inner_iterations.max(1) {
            inner += 1;
            let mut examples = positives.clone();
            for (image, group) in &cache.groups {
                examples.push(WindowExample::new(
                    &shapes,
                    &negatives[*image].pyramid,
                    group.clone(),
                    -1.0,
                )?);
            }
            let clock = std::time::Instant::now();
            let sol = optimize_convex(&current, &layout, &examples, cfg.c, &cfg.sgd, cfg.tolerance)?;
            epochs += sol.epochs;
            log::debug!(
                "solve on {} examples ({} candidates): {:.4} -> {:.4} in {} epochs ({:.1?})",
                examples.len(),
                cache.len() + positives.len(),
                sol.initial_objective,
                sol.objective,
                sol.epochs,
                clock.elapsed()
            );
            let clock = std::time::Instant::now();
            let mut candidate = shapes.clone();
            set_model_params(&mut candidate, &sol.beta)?;
            // Everything below uses the stored single-precision weights.
            let stored = model_params(&candidate);
            let mined = mine_negatives(&candidate, negatives, cfg.negative_cache_cells)?;
            let after = squared_norm(&stored) + cfg.c * (pos_hinge(&stored) + mined.hinge);
            log::debug!(
                "{phase:?} round {round} try {inner}: objective {before:.6} -> {after:.6} ({} hard negatives, mined in {:.1?})",
                mined.violators,
                clock.elapsed()
            );
            let hardness: Vec<f64> = examples[positives.len()..]
                .par_iter()
                .map(|e| example_score(&stored, &layout, e))
                .collect();
            let descended = after <= before + cfg.tolerance * before.abs();
            cache.add(mined.cache.clone());
            cache.keep_hardest(&hardness, cfg.negative_cache_cells);
            if descended {
                self.model = candidate;
                self.mined = Some(mined);
                objective = after;
                accepted = true;
                break;
            }
            current = stored;
        }
        self.working = cache;
        if !accepted {
            log::warn!("{phase:?} round {round}: no descent after {inner} solve(s); keeping the previous model");
        }
        let mined = self.mining()?;
        let (hard_negatives, cache_entries, cache_cells) = (mined.violators, mined.cache.len(), mined.cache_cells());
        let validation_ap = if self.data.validation.is_empty() {
            None
        } else {
            Some(validation_ap(&self.model, &self.data.validation)?)
        };
        Ok(RoundTelemetry {
            phase,
            round,
            objective_before: before,
            objective,
            accepted,
            inner_iterations: inner,
            sgd_epochs: epochs,
            positives_used: positives.len(),
            positives_infeasible: infeasible,
            hard_negatives,
            cache_entries,
            cache_cells,
            validation_ap,
        })
    }
}

/// Hard negatives grouped by window. A window found again
/// under a different model adds its new part placements as further
/// candidates.
#[derive(Debug, Default)]
struct CacheGroups {
    groups: Vec<(usize, Vec<Placement>)>,
    cells: Vec<usize>,
    slot: HashMap<CacheKey, usize>,
}

impl CacheGroups {
    fn len(&self) -> usize {
        self.groups.iter().map(|(_, g)| g.len()).sum()
    }

    fn add(&mut self, entries: Vec<HardNegative>) {
        for h in entries {
            let key = cache_key(&h);
            match self.slot.get(&key) {
                Some(&i) => {
                    let group = &mut self.groups[i].1;
                    if !group.iter().any(|p| p.parts == h.placement.parts) {
                        group.push(h.placement);
                        self.cells[i] += h.cells;
                    }
                }
                None => {
                    self.slot.insert(key, self.groups.len());
                    self.groups.push((h.image, vec![h.placement]));
                    self.cells.push(h.cells);
                }
            }
        }
    }

    /// Keeps the windows with the highest `score` (ties in cache order)
    /// whose cells fit in `budget`. `score` lists the groups present before
    /// the last `add`; groups added since count as hardest.
    fn keep_hardest(&mut self, score: &[f64], budget: usize) {
        let mut order: Vec<usize> = (0..self.groups.len()).collect();
        let hardness = |i: usize| score.get(i).copied().unwrap_or(f64::INFINITY);
        order.sort_by(|&a, &b| hardness(b).total_cmp(&hardness(a)));
        let mut used = 0;
        order.retain(|&i| {
            used += self.cells[i];
            used <= budget
        });
        order.sort_unstable();
        let groups = std::mem::take(&mut self.groups);
        let cells = std::mem::take(&mut self.cells);
        let mut keep = vec![false; groups.len()];
        for &i in &order {
            keep[i] = true;
        }
        self.slot.clear();
        for (i, (g, c)) in groups.into_iter().zip(cells).enumerate() {
            if keep[i] {
                self.slot
                    .insert((g.0, g.1[0].component, g.1[0].level, g.1[0].root), self.groups.len());
                self.groups.push(g);
                self.cells.push(c);
            }
        }
    }
}

/// Every-point AP of `model` on prepared images at the default match IoU.
fn validation_ap(model: &Model, images: &[TrainImage]) -> Result<f64> {
    let per_image: Vec<Result<Vec<ScoredBox>>> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            Ok(
                detect_in_pyramid(&img.pyramid, model, VALIDATION_THRESHOLD, DEFAULT_NMS_OVERLAP)?
                    .into_iter()
                    .map(|d| ScoredBox {
                        image: i,
                        bbox: d.bbox,
                        score: d.score,
                    })
                    .collect(),
            )
        })
        .collect();
    let mut dets = Vec::new();
    for r in per_image {
        dets.extend(r?);
    }
    let truth: Vec<Vec<GroundTruthBox>> = images
        .iter()
        .map(|img| {
            img.boxes
                .iter()
                .map(|&bbox| GroundTruthBox { bbox, difficult: false })
                .collect()
        })
        .collect();
    Ok(evaluate_detections(&dets, &truth, DEFAULT_MATCH_IOU, false).ap)
}

/// Trains a model for `class_name` from positive images (with boxes),
/// negative images (without the class) and optional validation images
/// whose AP is recorded after every round.
pub fn train(
    class_name: &str,
    gaze_channels: usize,
    positives: &[TrainSample],
    negatives: &[TrainSample],
    validation: &[TrainSample],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if negatives.is_empty() {
        return Err(Error::Data(format!("no negative images for class '{class_name}'")));
    }
    if let Some(s) = negatives.iter().find(|s| !s.boxes.is_empty()) {
        return Err(Error::invalid(format!("negative image '{}' has object boxes", s.id)));
    }
    let sources: Vec<WarpSource> = positives
        .iter()
        .flat_map(|s| s.boxes.iter().map(|&bbox| WarpSource { image: &s.image, bbox }))
        .collect();
    let (mut model, _) = init_components(&sources, class_name, gaze_channels, config)?;
    model.metadata.config_hash = Some(config.hash());
    let data = Prepared {
        positives: prepare(positives, &model)?,
        negatives: prepare(negatives, &model)?,
        validation: prepare(validation, &model)?,
    };
    let mut state = State {
        model,
        config,
        data: &data,
        mined: None,
        working: CacheGroups::default(),
    };
    let mut telemetry = Vec::new();
    for round in 0..config.warmup_rounds {
        telemetry.push(state.round(Phase::Warmup, round)?);
    }
    if config.n_parts > 0 {
        for c in &mut state.model.components {
            *c = init_parts(c, config.n_parts, config.part_size)?;
        }
        state.mined = None;
        state.working = CacheGroups::default();
    }
    for round in 0..config.outer_rounds {
        telemetry.push(state.round(Phase::Parts, round)?);
    }
    for t in &telemetry {
        log::info!(
            "{:?} round {}: objective {:.6} -> {:.6}{}",
            t.phase,
            t.round,
            t.objective_before,
            t.objective,
            t.validation_ap
                .map(|ap| format!(", validation AP {ap:.4}"))
                .unwrap_or_default()
        );
    }
    Ok(TrainOutcome {
        model: state.model,
        telemetry,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{render_image, SyntheticSpec};
    use crate::features::IMAGE_CHANNELS;
    use crate::train::config::SgdConfig;

    fn samples(n: usize, with_maps: bool) -> (Vec<TrainSample>, Vec<TrainSample>) {
        let spec = SyntheticSpec {
            width: 64,
            height: 64,
            n_classes: 1,
            texture_periods: vec![16.0],
            object_size: [28.0, 36.0],
            ..SyntheticSpec::default()
        };
        let (mut pos, mut neg) = (Vec::new(), Vec::new());
        for i in 0..n {
            let s = render_image(&spec, i);
            let sample = TrainSample {
                id: s.id,
                density_maps: if with_maps {
                    vec![DensityMap::zeros(64, 64)]
                } else {
                    Vec::new()
                },
                image: s.image,
                boxes: s.objects.iter().map(|o| o.1).collect(),
            };
            if sample.boxes.is_empty() {
                neg.push(sample)
            } else {
                pos.push(sample)
            }
        }
        (pos, neg)
    }

    fn quick_config() -> TrainConfig {
        TrainConfig {
            n_components: 1,
            n_parts: 2,
            warmup_rounds: 1,
            outer_rounds: 1,
            max_inner_iterations: 2,
            sgd: SgdConfig {
                epochs: 4,
                ..SgdConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn image_only_training_has_no_gaze_channels() {
        let (pos, neg) = samples(24, false);
        let model = train("pattern0", 0, &pos, &neg, &[], &quick_config()).unwrap().model;
        assert_eq!(model.gaze_channels, 0);
        for c in &model.components {
            assert_eq!(c.root.channels, IMAGE_CHANNELS);
            assert!(c.parts.iter().all(|p| p.filter.channels == IMAGE_CHANNELS));
        }
    }

    #[test]
    fn blank_gaze_channel_keeps_zero_weights_and_runs_repeat() {
        let (pos, neg) = samples(24, true);
        let cfg = quick_config();
        let a = train("pattern0", 1, &pos, &neg, &[], &cfg).unwrap();
        for c in &a.model.components {
            let gaze = |f: &crate::dpm::Filter| f.channel_block(IMAGE_CHANNELS, IMAGE_CHANNELS + 1);
            assert!(gaze(&c.root).iter().all(|v| *v == 0.0));
            assert!(c.parts.iter().all(|p| gaze(&p.filter).iter().all(|v| *v == 0.0)));
            assert!(!c.parts.is_empty());
        }
        let b = train("pattern0", 1, &pos, &neg, &[], &cfg).unwrap();
        assert_eq!(a.model, b.model);
    }
}
