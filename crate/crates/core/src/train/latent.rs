//! Latent positive assignment and hard-negative mining.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::dpm::{placement_features, placement_runs, score_pyramid, Component, Model, PaddedPyramid};
use crate::error::{Error, Result};
use crate::geometry::BBox;
use crate::train::sgd::TrainingExample;

/// A training image with its pyramid prepared for the model's padding.
#[derive(Debug, Clone)]
pub struct TrainImage {
    pub id: String,
    pub pyramid: PaddedPyramid,
    /// Object boxes of the class being trained (empty for negatives).
    pub boxes: Vec<BBox>,
}

/// A fully specified placement of one component.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub component: usize,
    pub level: usize,
    pub root: (i64, i64),
    pub parts: Vec<(i64, i64)>,
    pub score: f64,
}

impl Placement {
    pub fn features(&self, model: &Model, pyramid: &PaddedPyramid) -> Result<Vec<f32>> {
        placement_features(
            pyramid,
            &model.components[self.component],
            self.level,
            self.root,
            &self.parts,
        )
    }
}

/// One window used as a training example, with one or more candidate
/// part placements (all sharing component, level and root position). Its
/// features are read from the pyramid whenever they are needed.
#[derive(Debug, Clone)]
pub struct WindowExample<'a> {
    pyramid: &'a PaddedPyramid,
    component: &'a Component,
    placements: Vec<Placement>,
    label: f64,
}

impl<'a> WindowExample<'a> {
    pub fn new(model: &'a Model, pyramid: &'a PaddedPyramid, placements: Vec<Placement>, label: f64) -> Result<Self> {
        let first = placements
            .first()
            .ok_or_else(|| Error::invalid("a window example needs a placement"))?;
        let component = model
            .components
            .get(first.component)
            .ok_or_else(|| Error::invalid(format!("no component {}", first.component)))?;
        for p in &placements {
            if (p.component, p.level, p.root) != (first.component, first.level, first.root)
                || !pyramid.root_levels().contains(&p.level)
                || p.parts.len() != component.parts.len()
            {
                return Err(Error::invalid("placement does not fit the window, model or pyramid"));
            }
        }
        Ok(WindowExample {
            pyramid,
            component,
            placements,
            label,
        })
    }

    pub fn placements(&self) -> &[Placement] {
        &self.placements
    }
}

impl TrainingExample for WindowExample<'_> {
    fn block(&self) -> usize {
        self.placements[0].component
    }

    fn label(&self) -> f64 {
        self.label
    }

    fn candidates(&self) -> usize {
        self.placements.len()
    }

    fn for_each_run(&self, k: usize, f: &mut dyn FnMut(usize, &[f32])) {
        let p = &self.placements[k];
        placement_runs(self.pyramid, self.component, p.level, p.root, &p.parts, f)
            .expect("placement checked at construction");
    }
}

/// For every box of every image (in order), the best-scoring placement whose
/// clipped root window overlaps the box by at least `min_overlap`, or `None`
/// when no window qualifies.
pub fn relabel_positives(model: &Model, images: &[TrainImage], min_overlap: f64) -> Result<Vec<Option<Placement>>> {
    let per_image: Vec<Result<Vec<Option<Placement>>>> = images
        .par_iter()
        .map(|img| {
            let pp = &img.pyramid;
            let (iw, ih) = (pp.image_width as f64, pp.image_height as f64);
            let scores = score_pyramid(pp, model)?;
            let mut best: Vec<Option<(f64, usize, usize, usize)>> = vec![None; img.boxes.len()];
            for (si, s) in scores.iter().enumerate() {
                let root = &model.components[s.component].root;
                for gy in 0..s.scores.height {
                    for gx in 0..s.scores.width {
                        let score = s.scores.get(gx, gy);
                        let (x, y) = s.root_cell(gx, gy);
                        let window = pp.window_box(s.level, x, y, root.width, root.height).clip(iw, ih);
                        for (b, slot) in img.boxes.iter().zip(best.iter_mut()) {
                            if window.iou(b) >= min_overlap && slot.is_none_or(|(v, ..)| score > v) {
                                *slot = Some((score, si, gx, gy));
                            }
                        }
                    }
                }
            }
            Ok(best
                .into_iter()
                .map(|slot| {
                    slot.map(|(score, si, gx, gy)| {
                        let s = &scores[si];
                        Placement {
                            component: s.component,
                            level: s.level,
                            root: s.root_cell(gx, gy),
                            parts: s.placements(gx, gy),
                            score,
                        }
                    })
                })
                .collect())
        })
        .collect();
    let mut out = Vec::new();
    for r in per_image {
        out.extend(r?);
    }
    Ok(out)
}

/// A negative window kept for training.
#[derive(Debug, Clone, PartialEq)]
pub struct HardNegative {
    pub image: usize,
    pub placement: Placement,
    /// Feature cells the window occupies in the cache.
    pub cells: usize,
}

/// Result of scanning all negative images.
#[derive(Debug, Clone)]
pub struct Mining {
    /// Sum of `1 + score` over every negative window scoring above -1.
    pub hinge: f64,
    /// Number of such windows.
    pub violators: usize,
    /// The hardest violators, best first, within the cell budget.
    pub cache: Vec<HardNegative>,
}

impl Mining {
    pub fn cache_cells(&self) -> usize {
        self.cache.iter().map(|h| h.cells).sum()
    }
}

fn window_cells(model: &Model, component: usize) -> usize {
    let c = &model.components[component];
    c.root.width * c.root.height + c.parts.iter().map(|p| p.filter.width * p.filter.height).sum::<usize>()
}

fn hardness_order(a: &HardNegative, b: &HardNegative) -> Ordering {
    b.placement
        .score
        .total_cmp(&a.placement.score)
        .then(a.image.cmp(&b.image))
        .then(a.placement.component.cmp(&b.placement.component))
        .then(a.placement.level.cmp(&b.placement.level))
        .then(a.placement.root.1.cmp(&b.placement.root.1))
        .then(a.placement.root.0.cmp(&b.placement.root.0))
}

/// Keeps the hardest entries whose cumulative size fits in `budget_cells`.
/// Entries scoring below -1 are dropped first.
pub fn prune_cache(mut cache: Vec<HardNegative>, budget_cells: usize) -> Vec<HardNegative> {
    cache.retain(|h| h.placement.score >= -1.0);
    cache.sort_by(hardness_order);
    let mut used = 0;
    let keep = cache
        .iter()
        .take_while(|h| {
            used += h.cells;
            used <= budget_cells
        })
        .count();
    cache.truncate(keep);
    cache
}

/// Scans every negative image exhaustively. Windows scoring at least -1 are
/// margin violators; all of them count toward the hinge, and the hardest
/// ones that fit in `budget_cells` are kept.
pub fn mine_negatives(model: &Model, images: &[TrainImage], budget_cells: usize) -> Result<Mining> {
    let min_cells = (0..model.components.len())
        .map(|c| window_cells(model, c))
        .min()
        .unwrap_or(1)
        .max(1);
    // No single image can place more windows than this in the global top.
    let per_image_cap = budget_cells / min_cells;
    let per_image: Vec<Result<(f64, usize, Vec<HardNegative>)>> = images
        .par_iter()
        .enumerate()
        .map(|(i, img)| {
            let scores = score_pyramid(&img.pyramid, model)?;
            let mut hinge = 0.0;
            let mut hits = Vec::new();
            for (si, s) in scores.iter().enumerate() {
                for gy in 0..s.scores.height {
                    for gx in 0..s.scores.width {
                        let v = s.scores.get(gx, gy);
                        if v >= -1.0 {
                            hinge += 1.0 + v;
                            hits.push((v, si, gx, gy));
                        }
                    }
                }
            }
            let violators = hits.len();
            // Stable sort keeps score-grid order (level, component, y, x) among ties.
            hits.sort_by(|a, b| b.0.total_cmp(&a.0));
            hits.truncate(per_image_cap);
            let kept = hits
                .into_iter()
                .map(|(v, si, gx, gy)| {
                    let s = &scores[si];
                    HardNegative {
                        image: i,
                        cells: window_cells(model, s.component),
                        placement: Placement {
                            component: s.component,
                            level: s.level,
                            root: s.root_cell(gx, gy),
                            parts: s.placements(gx, gy),
                            score: v,
                        },
                    }
                })
                .collect();
            Ok((hinge, violators, kept))
        })
        .collect();
    let mut hinge = 0.0;
    let mut violators = 0;
    let mut cache = Vec::new();
    for r in per_image {
        let (h, n, kept) = r?;
        hinge += h;
        violators += n;
        cache.extend(kept);
    }
    Ok(Mining {
        hinge,
        violators,
        cache: prune_cache(cache, budget_cells),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn neg(image: usize, score: f64, cells: usize) -> HardNegative {
        HardNegative {
            image,
            cells,
            placement: Placement {
                component: 0,
                level: 5,
                root: (0, 0),
                parts: vec![],
                score,
            },
        }
    }

    #[test]
    fn prune_keeps_hardest_within_budget() {
        let cache = vec![neg(0, -0.5, 10), neg(1, 2.0, 10), neg(2, -1.5, 10), neg(3, 0.0, 10)];
        let kept = prune_cache(cache.clone(), 25);
        let ids: Vec<usize> = kept.iter().map(|h| h.image).collect();
        assert_eq!(ids, vec![1, 3]);
        assert_eq!(prune_cache(cache, 1000).len(), 3);
    }
}
