//! Mixture scoring over a padded feature pyramid and sliding-window detection.
//!
//! Coordinates handed out by this module are unpadded cell indices at the
//! relevant level. A root at unpadded cell `(x0, y0)` of level `L` places
//! part `i` ideally at `(2 x0 + ax_i, 2 y0 + ay_i)` on level `L - lpo`.

use rayon::prelude::*;

use crate::dpm::dt::{distance_transform, DistanceTransform};
use crate::dpm::filter::{correlate, Filter, Grid};
use crate::dpm::model::{Component, Model};
use crate::dpm::nms::{nms, Detection, DEFAULT_NMS_OVERLAP};
use crate::error::{Error, Result};
use crate::features::{build_detection_pyramid, FeatureMap, FeaturePyramid};
use crate::gaze::DensityMap;
use crate::geometry::BBox;
use crate::raster::Raster;

/// One pyramid level surrounded by enough zero cells for every use the
/// model makes of it.
#[derive(Debug, Clone)]
pub struct PaddedLevel {
    map: FeatureMap,
    pad: (usize, usize),
    cells: (usize, usize),
}

impl PaddedLevel {
    pub fn scale(&self) -> f64 {
        self.map.scale
    }

    pub fn cells(&self) -> (usize, usize) {
        self.cells
    }

    pub fn pad(&self) -> (usize, usize) {
        self.pad
    }

    /// Response of `filter` over this level viewed with `pad` zero cells per
    /// side (`pad` must not exceed the stored padding). `None` when the
    /// filter does not fit.
    fn response(&self, filter: &Filter, pad: (usize, usize)) -> Option<Grid> {
        debug_assert!(pad.0 <= self.pad.0 && pad.1 <= self.pad.1);
        let win_w = self.cells.0 + 2 * pad.0;
        let win_h = self.cells.1 + 2 * pad.1;
        if win_w < filter.width || win_h < filter.height {
            return None;
        }
        let x0 = self.pad.0 - pad.0;
        let y0 = self.pad.1 - pad.1;
        Some(correlate(&self.map, x0, y0, win_w, win_h, filter))
    }

    /// Visits the stored cells of the `w x h` window at unpadded `(x, y)`
    /// row by row as `(offset, values)`, where `offset` is the position of
    /// the first value within the window's flattened `(y, x, c)` layout.
    /// Cells outside the stored map are skipped (they read as zero).
    pub fn window_runs(&self, x: i64, y: i64, w: usize, h: usize, f: &mut dyn FnMut(usize, &[f32])) {
        let c = self.map.channels;
        let (mw, mh) = (self.map.cells_w as i64, self.map.cells_h as i64);
        let px0 = x + self.pad.0 as i64;
        let lo = px0.max(0);
        let hi = (px0 + w as i64).min(mw);
        if lo >= hi {
            return;
        }
        for j in 0..h as i64 {
            let py = y + j + self.pad.1 as i64;
            if py < 0 || py >= mh {
                continue;
            }
            let start = (py * mw + lo) as usize * c;
            let end = (py * mw + hi) as usize * c;
            f((j as usize * w + (lo - px0) as usize) * c, &self.map.values[start..end]);
        }
    }

    /// Copies the `w x h` window whose top-left unpadded cell is `(x, y)`
    /// into `out`; cells outside the stored map read as zero.
    pub fn window(&self, x: i64, y: i64, w: usize, h: usize, out: &mut Vec<f32>) {
        let c = self.map.channels;
        for j in 0..h as i64 {
            let py = y + j + self.pad.1 as i64;
            for i in 0..w as i64 {
                let px = x + i + self.pad.0 as i64;
                if px < 0 || py < 0 || px >= self.map.cells_w as i64 || py >= self.map.cells_h as i64 {
                    out.extend(std::iter::repeat_n(0.0, c));
                } else {
                    out.extend_from_slice(self.map.cell(px as usize, py as usize));
                }
            }
        }
    }
}

/// Feature pyramid padded for a particular set of root sizes.
#[derive(Debug, Clone)]
pub struct PaddedPyramid {
    pub levels: Vec<PaddedLevel>,
    pub levels_per_octave: usize,
    pub channels: usize,
    pub image_width: usize,
    pub image_height: usize,
    root_pad: (usize, usize),
}

impl PaddedPyramid {
    /// Pads root levels by `root_pad`. A level that also serves as the part
    /// level of root level `L` gets `2 root_pad` plus whatever is needed for
    /// part grids to cover every doubled root position of `L`.
    pub fn new(pyramid: &FeaturePyramid, root_pad: (usize, usize)) -> Self {
        let n = pyramid.levels.len();
        let lpo = pyramid.levels_per_octave;
        let levels = (0..n)
            .map(|l| {
                let m = &pyramid.levels[l];
                let pad = if l + lpo < n {
                    Self::part_pad_for(&pyramid.levels[l + lpo], m, root_pad)
                } else {
                    root_pad
                };
                PaddedLevel {
                    map: m.padded(pad.0, pad.1),
                    pad,
                    cells: (m.cells_w, m.cells_h),
                }
            })
            .collect();
        PaddedPyramid {
            levels,
            levels_per_octave: lpo,
            channels: pyramid.channels(),
            image_width: pyramid.image_width,
            image_height: pyramid.image_height,
            root_pad,
        }
    }

    fn part_pad_for(root: &FeatureMap, part: &FeatureMap, root_pad: (usize, usize)) -> (usize, usize) {
        (
            2 * root_pad.0 + (2 * root.cells_w).saturating_sub(part.cells_w),
            2 * root_pad.1 + (2 * root.cells_h).saturating_sub(part.cells_h),
        )
    }

    pub fn root_pad(&self) -> (usize, usize) {
        self.root_pad
    }

    /// Padding of the part level used by `root_level`.
    pub fn part_pad(&self, root_level: usize) -> Result<(usize, usize)> {
        self.check_root_level(root_level)?;
        Ok(self.levels[root_level - self.levels_per_octave].pad)
    }

    /// Root levels that have a part level one octave finer.
    pub fn root_levels(&self) -> std::ops::Range<usize> {
        self.levels_per_octave.min(self.levels.len())..self.levels.len()
    }

    fn check_root_level(&self, root_level: usize) -> Result<()> {
        if root_level < self.levels_per_octave || root_level >= self.levels.len() {
            return Err(Error::LevelSkip {
                level: root_level,
                levels_per_octave: self.levels_per_octave,
            });
        }
        Ok(())
    }

    /// Image-space box of a `w x h` cell window at unpadded `(x, y)` on `level`, unclipped.
    pub fn window_box(&self, level: usize, x: i64, y: i64, w: usize, h: usize) -> BBox {
        let lv = &self.levels[level];
        let k = lv.map.cell_size as f64 / lv.map.scale;
        BBox::new(x as f64 * k, y as f64 * k, w as f64 * k, h as f64 * k)
    }
}

/// Scores of one component at one root level, indexed by padded root cell.
#[derive(Debug, Clone)]
pub struct ComponentScore {
    pub component: usize,
    pub level: usize,
    pub scores: Grid,
    root_pad: (usize, usize),
    part_pad: (usize, usize),
    parts: Vec<PartTransform>,
}

#[derive(Debug, Clone)]
struct PartTransform {
    dt: DistanceTransform,
    /// Offset from `2 * padded root cell` to the part's DT grid index.
    offset: (usize, usize),
}

impl ComponentScore {
    /// Unpadded root cell of score grid entry `(gx, gy)`.
    pub fn root_cell(&self, gx: usize, gy: usize) -> (i64, i64) {
        (gx as i64 - self.root_pad.0 as i64, gy as i64 - self.root_pad.1 as i64)
    }

    /// Best part placements (unpadded, part level) for score grid entry `(gx, gy)`.
    pub fn placements(&self, gx: usize, gy: usize) -> Vec<(i64, i64)> {
        self.parts
            .iter()
            .map(|p| {
                let (px, py) = p.dt.argmax_at(2 * gx + p.offset.0, 2 * gy + p.offset.1);
                (px as i64 - self.part_pad.0 as i64, py as i64 - self.part_pad.1 as i64)
            })
            .collect()
    }
}

/// Scores `comp` at every root position of `root_level`:
/// root response plus, per part, the distance-transformed part response
/// read at the anchored position, plus the bias.
pub fn score_component(pyramid: &PaddedPyramid, comp: &Component, root_level: usize) -> Result<ComponentScore> {
    pyramid.check_root_level(root_level)?;
    if comp.channels() != pyramid.channels {
        return Err(Error::invalid(format!(
            "component has {} channels, pyramid has {}",
            comp.channels(),
            pyramid.channels
        )));
    }
    let root_pad = pyramid.root_pad;
    let root_lv = &pyramid.levels[root_level];
    let part_lv = &pyramid.levels[root_level - pyramid.levels_per_octave];
    let part_pad = part_lv.pad;
    let empty = |parts| ComponentScore {
        component: 0,
        level: root_level,
        scores: Grid::new(0, 0, Vec::new()),
        root_pad,
        part_pad,
        parts,
    };
    let Some(mut scores) = root_lv.response(&comp.root, root_pad) else {
        return Ok(empty(Vec::new()));
    };
    // Offset between doubled padded root cells and padded part cells.
    let extra = (part_pad.0 - 2 * root_pad.0, part_pad.1 - 2 * root_pad.1);
    let mut parts = Vec::with_capacity(comp.parts.len());
    for (i, part) in comp.parts.iter().enumerate() {
        if part.anchor.0 + part.filter.width > 2 * comp.root.width
            || part.anchor.1 + part.filter.height > 2 * comp.root.height
        {
            return Err(Error::invalid(format!("part {i} sticks out of the doubled root")));
        }
        let Some(resp) = part_lv.response(&part.filter, part_pad) else {
            return Ok(empty(Vec::new()));
        };
        let dt = distance_transform(&resp, &part.deformation)?;
        let offset = (part.anchor.0 + extra.0, part.anchor.1 + extra.1);
        for gy in 0..scores.height {
            for gx in 0..scores.width {
                scores.values[gy * scores.width + gx] += dt.values.get(2 * gx + offset.0, 2 * gy + offset.1);
            }
        }
        parts.push(PartTransform { dt, offset });
    }
    let bias = comp.bias as f64;
    for v in &mut scores.values {
        *v += bias;
    }
    Ok(ComponentScore {
        component: 0,
        level: root_level,
        scores,
        root_pad,
        part_pad,
        parts,
    })
}

/// Every (component, root level) score grid, ordered by level then component.
pub fn score_pyramid(pyramid: &PaddedPyramid, model: &Model) -> Result<Vec<ComponentScore>> {
    let jobs: Vec<(usize, usize)> = pyramid
        .root_levels()
        .flat_map(|l| (0..model.components.len()).map(move |c| (l, c)))
        .collect();
    jobs.par_iter()
        .map(|&(l, c)| {
            let mut s = score_component(pyramid, &model.components[c], l)?;
            s.component = c;
            Ok(s)
        })
        .collect()
}

/// Builds the padded detection pyramid `model` expects for an image.
pub fn model_pyramid(image: &Raster, density_maps: &[DensityMap], model: &Model) -> Result<PaddedPyramid> {
    if density_maps.len() != model.gaze_channels {
        return Err(Error::invalid(format!(
            "model expects {} density maps, got {}",
            model.gaze_channels,
            density_maps.len()
        )));
    }
    let pyr = build_detection_pyramid(
        image,
        density_maps,
        model.cell_size,
        model.levels_per_octave,
        model.min_root_cells(),
    )?;
    Ok(PaddedPyramid::new(&pyr, model.padding()))
}

/// Materializes a detection for score grid entry `(gx, gy)`.
pub fn detection_at(pyramid: &PaddedPyramid, model: &Model, s: &ComponentScore, gx: usize, gy: usize) -> Detection {
    let root = &model.components[s.component].root;
    let (x, y) = s.root_cell(gx, gy);
    let bbox = pyramid
        .window_box(s.level, x, y, root.width, root.height)
        .clip(pyramid.image_width as f64, pyramid.image_height as f64);
    Detection {
        bbox,
        score: s.scores.get(gx, gy),
        component_id: s.component,
        level: s.level,
        root: (x, y),
        part_placements: s.placements(gx, gy),
    }
}

/// All windows scoring strictly above `threshold`, without suppression.
pub fn scan(pyramid: &PaddedPyramid, model: &Model, threshold: f64) -> Result<Vec<Detection>> {
    let mut out = Vec::new();
    for s in score_pyramid(pyramid, model)? {
        for gy in 0..s.scores.height {
            for gx in 0..s.scores.width {
                if s.scores.get(gx, gy) > threshold {
                    out.push(detection_at(pyramid, model, &s, gx, gy));
                }
            }
        }
    }
    Ok(out)
}

/// Detections above `threshold` after NMS at `overlap`, best first.
pub fn detect_in_pyramid(
    pyramid: &PaddedPyramid,
    model: &Model,
    threshold: f64,
    overlap: f64,
) -> Result<Vec<Detection>> {
    let candidates = scan(pyramid, model, threshold)?;
    Ok(nms(candidates, overlap))
}

/// Runs `model` over an image and its density maps.
pub fn detect(image: &Raster, density_maps: &[DensityMap], model: &Model, threshold: f64) -> Result<Vec<Detection>> {
    if threshold == f64::INFINITY {
        return Ok(Vec::new());
    }
    let pyramid = model_pyramid(image, density_maps, model)?;
    detect_in_pyramid(&pyramid, model, threshold, DEFAULT_NMS_OVERLAP)
}

/// Visits the non-zero-able runs of the feature vector of a placed
/// component as `(offset, values)`, with offsets in the layout of
/// [`Component::params`]. Deformation features are `-(dx, dx^2, dy, dy^2)`
/// and the bias feature is 1. Runs not visited are zero.
pub fn placement_runs(
    pyramid: &PaddedPyramid,
    comp: &Component,
    root_level: usize,
    root: (i64, i64),
    placements: &[(i64, i64)],
    f: &mut dyn FnMut(usize, &[f32]),
) -> Result<()> {
    pyramid.check_root_level(root_level)?;
    if placements.len() != comp.parts.len() {
        return Err(Error::invalid("one placement per part is required"));
    }
    pyramid.levels[root_level].window_runs(root.0, root.1, comp.root.width, comp.root.height, f);
    let mut at = comp.root.len();
    let part_lv = &pyramid.levels[root_level - pyramid.levels_per_octave];
    for (part, &(px, py)) in comp.parts.iter().zip(placements) {
        let base = at;
        part_lv.window_runs(px, py, part.filter.width, part.filter.height, &mut |o, v| {
            f(base + o, v)
        });
        at += part.filter.len();
        let dx = (px - 2 * root.0 - part.anchor.0 as i64) as f32;
        let dy = (py - 2 * root.1 - part.anchor.1 as i64) as f32;
        f(at, &[-dx, -dx * dx, -dy, -dy * dy]);
        at += 4;
    }
    f(at, &[1.0]);
    Ok(())
}

/// Dense feature vector of a placed component (see [`placement_runs`]).
/// Its dot product with [`Component::params`] is the score of the placement.
pub fn placement_features(
    pyramid: &PaddedPyramid,
    comp: &Component,
    root_level: usize,
    root: (i64, i64),
    placements: &[(i64, i64)],
) -> Result<Vec<f32>> {
    let mut out = vec![0.0f32; comp.param_len()];
    placement_runs(pyramid, comp, root_level, root, placements, &mut |o, v| {
        out[o..o + v.len()].copy_from_slice(v)
    })?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dpm::dt::Deformation;
    use crate::dpm::model::{ModelMetadata, Part};
    use crate::features::IMAGE_CHANNELS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_filter(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Filter {
        Filter::from_values(w, h, c, (0..w * h * c).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn random_pyramid(rng: &mut ChaCha8Rng, sizes: &[(usize, usize)], channels: usize, lpo: usize) -> FeaturePyramid {
        let levels = sizes
            .iter()
            .enumerate()
            .map(|(i, &(w, h))| {
                let mut m = FeatureMap::zeros(w, h, channels);
                m.cell_size = 8;
                m.scale = 2f64.powf(-(i as f64) / lpo as f64);
                for v in &mut m.values {
                    *v = rng.random_range(0.0..1.0);
                }
                m
            })
            .collect();
        FeaturePyramid {
            levels,
            levels_per_octave: lpo,
            gaze_channels: channels - IMAGE_CHANNELS,
            image_width: sizes[0].0 * 8,
            image_height: sizes[0].1 * 8,
        }
    }

    fn tiny_model(rng: &mut ChaCha8Rng, channels: usize) -> Model {
        let parts = vec![
            Part {
                filter: random_filter(rng, 3, 3, channels),
                anchor: (0, 1),
                deformation: Deformation::new(0.05, 0.3, -0.02, 0.2),
            },
            Part {
                filter: random_filter(rng, 3, 3, channels),
                anchor: (4, 3),
                deformation: Deformation::new(-0.1, 0.5, 0.1, 0.1),
            },
        ];
        Model {
            class_name: "t".into(),
            gaze_channels: channels - IMAGE_CHANNELS,
            cell_size: 8,
            levels_per_octave: 1,
            components: vec![Component {
                root: random_filter(rng, 4, 4, channels),
                parts,
                bias: 0.25,
            }],
            metadata: ModelMetadata::default(),
        }
    }

    fn dot(a: &[f32], b: &[f32]) -> f64 {
        a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum()
    }

    #[test]
    fn level_without_finer_octave_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pyr = random_pyramid(&mut rng, &[(12, 12), (9, 9), (6, 6)], IMAGE_CHANNELS, 2);
        let model = tiny_model(&mut rng, IMAGE_CHANNELS);
        let pp = PaddedPyramid::new(&pyr, model.padding());
        assert!(matches!(
            score_component(&pp, &model.components[0], 1),
            Err(Error::LevelSkip { level: 1, .. })
        ));
        assert!(score_component(&pp, &model.components[0], 2).is_ok());
    }

    #[test]
    fn matches_exhaustive_placement_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let pyr = random_pyramid(&mut rng, &[(11, 9), (6, 5)], IMAGE_CHANNELS + 1, 1);
        let model = tiny_model(&mut rng, IMAGE_CHANNELS + 1);
        let comp = &model.components[0];
        let pp = PaddedPyramid::new(&pyr, model.padding());
        let s = score_component(&pp, comp, 1).unwrap();
        let part_pad = pp.part_pad(1).unwrap();
        let (pw, ph) = pp.levels[0].cells();
        let params: Vec<f32> = comp.params().iter().map(|&v| v as f32).collect();
        for gy in 0..s.scores.height {
            for gx in 0..s.scores.width {
                let root = s.root_cell(gx, gy);
                // Enumerate every placement of every part independently.
                let mut best_total = 0.0;
                let mut best = Vec::new();
                for part in &comp.parts {
                    let mut top = (f64::NEG_INFINITY, (0, 0));
                    for py in -(part_pad.1 as i64)..=(ph + part_pad.1 - part.filter.height) as i64 {
                        for px in -(part_pad.0 as i64)..=(pw + part_pad.0 - part.filter.width) as i64 {
                            let mut win = Vec::new();
                            pp.levels[0].window(px, py, part.filter.width, part.filter.height, &mut win);
                            let dx = px - 2 * root.0 - part.anchor.0 as i64;
                            let dy = py - 2 * root.1 - part.anchor.1 as i64;
                            let v = dot(&win, &part.filter.values) - part.deformation.cost(dx, dy);
                            if v > top.0 {
                                top = (v, (px, py));
                            }
                        }
                    }
                    best_total += top.0;
                    best.push(top.1);
                }
                let mut win = Vec::new();
                pp.levels[1].window(root.0, root.1, 4, 4, &mut win);
                let expect = dot(&win, &comp.root.values) + best_total + comp.bias as f64;
                let got = s.scores.get(gx, gy);
                assert!(
                    (got - expect).abs() <= 1e-9 * expect.abs().max(1.0),
                    "{got} vs {expect}"
                );
                let phi = placement_features(&pp, comp, 1, root, &s.placements(gx, gy)).unwrap();
                let via_phi = dot(&phi, &params);
                assert!((via_phi - got).abs() <= 1e-9 * got.abs().max(1.0));
            }
        }
    }

    #[test]
    fn zero_gaze_weights_match_image_only_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pyr = random_pyramid(&mut rng, &[(10, 10), (5, 5)], IMAGE_CHANNELS + 1, 1);
        let mut model = tiny_model(&mut rng, IMAGE_CHANNELS + 1);
        let zero_gaze = |f: &mut Filter| {
            for cell in f.values.chunks_exact_mut(IMAGE_CHANNELS + 1) {
                cell[IMAGE_CHANNELS] = 0.0;
            }
        };
        zero_gaze(&mut model.components[0].root);
        for p in &mut model.components[0].parts {
            zero_gaze(&mut p.filter);
        }
        let image_only = model.without_gaze();
        let mut pyr31 = pyr.clone();
        pyr31.gaze_channels = 0;
        for l in &mut pyr31.levels {
            l.values = l
                .values
                .chunks_exact(IMAGE_CHANNELS + 1)
                .flat_map(|c| c[..IMAGE_CHANNELS].to_vec())
                .collect();
            l.channels = IMAGE_CHANNELS;
        }
        let a = score_component(&PaddedPyramid::new(&pyr, model.padding()), &model.components[0], 1).unwrap();
        let b = score_component(
            &PaddedPyramid::new(&pyr31, model.padding()),
            &image_only.components[0],
            1,
        )
        .unwrap();
        for (x, y) in a.scores.values.iter().zip(&b.scores.values) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn bias_shifts_scores_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pyr = random_pyramid(&mut rng, &[(10, 10), (5, 5)], IMAGE_CHANNELS, 1);
        let model = tiny_model(&mut rng, IMAGE_CHANNELS);
        let pp = PaddedPyramid::new(&pyr, model.padding());
        let mut shifted = model.clone();
        shifted.components[0].bias += 1.5;
        let a = scan(&pp, &model, f64::NEG_INFINITY).unwrap();
        let b = scan(&pp, &shifted, f64::NEG_INFINITY).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((y.score - x.score - 1.5).abs() < 1e-12);
            assert_eq!(x.part_placements, y.part_placements);
        }
    }
}
