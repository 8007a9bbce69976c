//! Acceptance harness. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.
//!
//! `GAZEDPM_ACCEPTANCE=1,2,3` restricts the run to the listed criteria
//! (criteria 9 and 10 pull in the runs they depend on).

use std::collections::BTreeSet;
use std::path::Path;
use std::time::{Duration, Instant};

use gazedpm::data::{generate_synthetic, render_image, Dataset, GazeRecipe, SyntheticSpec};
use gazedpm::dpm::{
    detect, distance_transform, score_component, Component, Deformation, Detection, Filter, Grid, Model, ModelMetadata,
    PaddedPyramid, Part,
};
use gazedpm::eval::{
    average_precision, run_experiment, write_outcome, ExperimentOutcome, ExperimentSpec, MatchLabel, Variant,
};
use gazedpm::features::{FeatureMap, FeaturePyramid, IMAGE_CHANNELS};
use gazedpm::gaze::{build_density_map, DensityMap, Fixation};
use gazedpm::train::sgd::{objective, objective_and_gradient};
use gazedpm::train::{Example, ParamLayout, Phase};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;
type Check = (usize, &'static str, fn() -> Verdict);

/// `a` and `b` agree to `tol` relative, with an absolute floor of 1e-12 for
/// values that cancel to (nearly) zero.
fn close(a: f64, b: f64, tol: f64) -> bool {
    let d = (a - b).abs();
    d <= tol * a.abs().max(b.abs()) || d <= 1e-12
}

// ---------------------------------------------------------------------------
// Criterion 1: scoring against exhaustive enumeration

fn random_map(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> FeatureMap {
    let mut m = FeatureMap::zeros(w, h, c);
    for v in &mut m.values {
        *v = rng.random_range(-1.0f32..1.0);
    }
    m
}

fn random_filter(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize) -> Filter {
    let vals = (0..w * h * c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    Filter::from_values(w, h, c, vals).unwrap()
}

fn random_deformation(rng: &mut ChaCha8Rng) -> Deformation {
    Deformation::new(
        rng.random_range(-0.3f32..0.3),
        rng.random_range(0.01f32..0.6),
        rng.random_range(-0.3f32..0.3),
        rng.random_range(0.01f32..0.6),
    )
}

/// Feature value with zeros outside the map.
fn feat(m: &FeatureMap, x: i64, y: i64, c: usize) -> f64 {
    if x < 0 || y < 0 || x >= m.cells_w as i64 || y >= m.cells_h as i64 {
        0.0
    } else {
        m.cell(x as usize, y as usize)[c] as f64
    }
}

fn window_score(m: &FeatureMap, f: &Filter, x: i64, y: i64) -> f64 {
    let mut s = 0.0;
    for dy in 0..f.height {
        for dx in 0..f.width {
            for c in 0..f.channels {
                s += f.at(dx, dy, c) as f64 * feat(m, x + dx as i64, y + dy as i64, c);
            }
        }
    }
    s
}

/// Part response at every placement the padded part level allows, keyed by
/// unpadded top-left cell.
struct PartTable {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
    resp: Vec<f64>,
}

impl PartTable {
    fn new(m: &FeatureMap, f: &Filter, pad: (usize, usize)) -> Option<Self> {
        let pw = m.cells_w + 2 * pad.0;
        let ph = m.cells_h + 2 * pad.1;
        if pw < f.width || ph < f.height {
            return None;
        }
        let (w, h) = (pw - f.width + 1, ph - f.height + 1);
        let (x0, y0) = (-(pad.0 as i64), -(pad.1 as i64));
        let mut resp = Vec::with_capacity(w * h);
        for j in 0..h {
            for i in 0..w {
                resp.push(window_score(m, f, x0 + i as i64, y0 + j as i64));
            }
        }
        Some(PartTable { x0, y0, w, h, resp })
    }

    fn at(&self, x: i64, y: i64) -> Option<f64> {
        let (i, j) = (x - self.x0, y - self.y0);
        if i < 0 || j < 0 || i >= self.w as i64 || j >= self.h as i64 {
            return None;
        }
        Some(self.resp[j as usize * self.w + i as usize])
    }

    /// Best response minus deformation cost relative to `ideal`.
    fn best(&self, def: &Deformation, ideal: (i64, i64)) -> f64 {
        let mut best = f64::NEG_INFINITY;
        for j in 0..self.h {
            for i in 0..self.w {
                let (x, y) = (self.x0 + i as i64, self.y0 + j as i64);
                let v = self.resp[j * self.w + i] - def.cost(x - ideal.0, y - ideal.1);
                best = best.max(v);
            }
        }
        best
    }
}

fn check_dt(resp: &Grid, def: &Deformation, worst: &mut f64) -> std::result::Result<(), String> {
    let dt = distance_transform(resp, def).map_err(|e| e.to_string())?;
    for qy in 0..resp.height {
        for qx in 0..resp.width {
            let mut best = f64::NEG_INFINITY;
            for py in 0..resp.height {
                for px in 0..resp.width {
                    let v = resp.get(px, py) - def.cost(px as i64 - qx as i64, py as i64 - qy as i64);
                    best = best.max(v);
                }
            }
            let got = dt.values.get(qx, qy);
            let (ax, ay) = dt.argmax_at(qx, qy);
            let at_arg = resp.get(ax, ay) - def.cost(ax as i64 - qx as i64, ay as i64 - qy as i64);
            *worst = worst.max((got - best).abs());
            if !close(got, best, 1e-9) || !close(at_arg, best, 1e-9) {
                return Err(format!(
                    "distance transform at ({qx},{qy}): value {got}, argmax value {at_arg}, brute force {best}"
                ));
            }
        }
    }
    Ok(())
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut scores_checked, mut dts_checked, mut worst_rel, mut worst_dt) = (0usize, 0usize, 0.0f64, 0.0f64);
    for inst in 0..200 {
        let g = rng.random_range(0..=1usize);
        let channels = IMAGE_CHANNELS + g;
        let n_levels = rng.random_range(2..=3);
        let levels: Vec<FeatureMap> = (0..n_levels)
            .map(|_| {
                let (w, h) = (rng.random_range(1..=20), rng.random_range(1..=20));
                random_map(&mut rng, w, h, channels)
            })
            .collect();
        let pyramid = FeaturePyramid {
            levels,
            levels_per_octave: 1,
            gaze_channels: g,
            image_width: 160,
            image_height: 160,
        };
        let components: Vec<Component> = (0..rng.random_range(1..=2))
            .map(|_| {
                let (rw, rh) = (rng.random_range(1..=4), rng.random_range(1..=4));
                let root = random_filter(&mut rng, rw, rh, channels);
                let parts = (0..rng.random_range(0..=3))
                    .map(|_| {
                        let (pw, ph) = (rng.random_range(1..=3.min(2 * rw)), rng.random_range(1..=3.min(2 * rh)));
                        Part {
                            filter: random_filter(&mut rng, pw, ph, channels),
                            anchor: (rng.random_range(0..=2 * rw - pw), rng.random_range(0..=2 * rh - ph)),
                            deformation: random_deformation(&mut rng),
                        }
                    })
                    .collect();
                Component {
                    root,
                    parts,
                    bias: rng.random_range(-1.0f32..1.0),
                }
            })
            .collect();
        let root_pad = (rng.random_range(0..=3), rng.random_range(0..=3));
        let padded = PaddedPyramid::new(&pyramid, root_pad);

        for level in padded.root_levels() {
            let root_map = &pyramid.levels[level];
            let part_map = &pyramid.levels[level - 1];
            let part_pad = padded.part_pad(level).map_err(|e| e.to_string())?;
            for (ci, comp) in components.iter().enumerate() {
                let cs = score_component(&padded, comp, level).map_err(|e| e.to_string())?;
                let tables: Option<Vec<PartTable>> = comp
                    .parts
                    .iter()
                    .map(|p| PartTable::new(part_map, &p.filter, part_pad))
                    .collect();
                let gw = (root_map.cells_w + 2 * root_pad.0 + 1).saturating_sub(comp.root.width);
                let gh = (root_map.cells_h + 2 * root_pad.1 + 1).saturating_sub(comp.root.height);
                let Some(tables) = tables.filter(|_| gw > 0 && gh > 0) else {
                    if !cs.scores.values.is_empty() {
                        return Err(format!("instance {inst}: scores reported where no placement fits"));
                    }
                    continue;
                };
                if (cs.scores.width, cs.scores.height) != (gw, gh) {
                    return Err(format!(
                        "instance {inst} level {level} comp {ci}: score grid {}x{}, expected {gw}x{gh}",
                        cs.scores.width, cs.scores.height
                    ));
                }
                for gy in 0..gh {
                    for gx in 0..gw {
                        let (x0, y0) = (gx as i64 - root_pad.0 as i64, gy as i64 - root_pad.1 as i64);
                        if cs.root_cell(gx, gy) != (x0, y0) {
                            return Err(format!("instance {inst}: root cell mismatch at ({gx},{gy})"));
                        }
                        let mut brute = window_score(root_map, &comp.root, x0, y0) + comp.bias as f64;
                        let mut part_best = Vec::new();
                        for (p, t) in comp.parts.iter().zip(&tables) {
                            let ideal = (2 * x0 + p.anchor.0 as i64, 2 * y0 + p.anchor.1 as i64);
                            let b = t.best(&p.deformation, ideal);
                            part_best.push((b, ideal));
                            brute += b;
                        }
                        let got = cs.scores.get(gx, gy);
                        worst_rel = worst_rel.max((got - brute).abs() / brute.abs().max(1e-300));
                        if !close(got, brute, 1e-9) {
                            return Err(format!(
                                "instance {inst} level {level} comp {ci} at ({gx},{gy}): {got} vs brute force {brute}"
                            ));
                        }
                        for (i, ((px, py), (b, ideal))) in cs.placements(gx, gy).into_iter().zip(&part_best).enumerate()
                        {
                            let p = &comp.parts[i];
                            let v = tables[i]
                                .at(px, py)
                                .map(|r| r - p.deformation.cost(px - ideal.0, py - ideal.1));
                            if !v.is_some_and(|v| close(v, *b, 1e-9)) {
                                return Err(format!(
                                    "instance {inst}: part {i} placement ({px},{py}) scores {v:?}, best is {b}"
                                ));
                            }
                        }
                        scores_checked += 1;
                    }
                }
            }
        }

        // Distance transform on its own, over a random response grid.
        let (w, h) = (rng.random_range(1..=20), rng.random_range(1..=20));
        let resp = Grid::new(w, h, (0..w * h).map(|_| rng.random_range(-5.0..5.0)).collect());
        check_dt(&resp, &random_deformation(&mut rng), &mut worst_dt)?;
        dts_checked += 1;
    }
    let elapsed = start.elapsed();
    let detail = format!(
        "{scores_checked} root positions over 200 instances, worst relative error {worst_rel:.1e}; \
         {dts_checked} distance transforms, worst abs error {worst_dt:.1e}; {:.1}s",
        elapsed.as_secs_f64()
    );
    if elapsed >= Duration::from_secs(60) {
        return Err(format!("{detail} (limit 60s)"));
    }
    Ok(detail)
}

// ---------------------------------------------------------------------------
// Criterion 2: gaze-free reduction

fn random_gaze_model(rng: &mut ChaCha8Rng) -> Model {
    let channels = IMAGE_CHANNELS + 1;
    let comp = |rng: &mut ChaCha8Rng, rw: usize, rh: usize| Component {
        root: random_filter(rng, rw, rh, channels),
        parts: (0..3)
            .map(|i| Part {
                filter: random_filter(rng, 4, 4, channels),
                anchor: (i * 2 % (2 * rw - 3), i * 3 % (2 * rh - 3)),
                deformation: random_deformation(rng),
            })
            .collect(),
        bias: rng.random_range(-1.0f32..1.0),
    };
    let components = vec![comp(rng, 5, 5), comp(rng, 3, 6)];
    Model {
        class_name: "random".into(),
        gaze_channels: 1,
        cell_size: 8,
        levels_per_octave: 5,
        components,
        metadata: ModelMetadata::default(),
    }
}

fn zero_gaze_block(model: &Model) -> Model {
    let mut m = model.clone();
    let zero = |f: &mut Filter| {
        for cell in f.values.chunks_exact_mut(f.channels) {
            cell[IMAGE_CHANNELS..].fill(0.0);
        }
    };
    for c in &mut m.components {
        zero(&mut c.root);
        for p in &mut c.parts {
            zero(&mut p.filter);
        }
    }
    m
}

fn same_detections(a: &[Detection], b: &[Detection]) -> std::result::Result<(), String> {
    if a.len() != b.len() {
        return Err(format!("{} vs {} detections", a.len(), b.len()));
    }
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let same_place = x.bbox == y.bbox
            && x.component_id == y.component_id
            && x.level == y.level
            && x.root == y.root
            && x.part_placements == y.part_placements;
        if !same_place || (x.score - y.score).abs() > 1e-12 {
            return Err(format!("detection {i}: {x:?} vs {y:?}"));
        }
    }
    Ok(())
}

fn criterion_2() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let spec = SyntheticSpec {
        seed: 2,
        ..SyntheticSpec::default()
    };
    let mut total = 0;
    for i in 0..20 {
        let img = render_image(&spec, i);
        let (w, h) = (img.image.width, img.image.height);
        let model = random_gaze_model(&mut rng);
        let image_only = model.without_gaze();
        let reference = detect(&img.image, &[], &image_only, f64::NEG_INFINITY).map_err(|e| e.to_string())?;
        let map = build_density_map(&img.fixations, w, h).map_err(|e| e.to_string())?;
        let zeroed =
            detect(&img.image, &[map], &zero_gaze_block(&model), f64::NEG_INFINITY).map_err(|e| e.to_string())?;
        same_detections(&zeroed, &reference).map_err(|e| format!("image {i}, zero gaze weights: {e}"))?;
        let blank =
            detect(&img.image, &[DensityMap::zeros(w, h)], &model, f64::NEG_INFINITY).map_err(|e| e.to_string())?;
        same_detections(&blank, &reference).map_err(|e| format!("image {i}, zero density map: {e}"))?;
        total += reference.len();
    }
    Ok(format!("20 images, {total} detections, both reductions identical"))
}

// ---------------------------------------------------------------------------
// Criterion 3: density maps

fn oracle_density(fix: &[Fixation], w: usize, h: usize) -> Vec<f64> {
    let sigma = 0.07 * h as f64;
    let any_missing = fix.iter().any(|f| f.duration.is_none());
    let mut raw = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for f in fix {
                let weight = if any_missing { 1.0 } else { f.duration.unwrap() };
                let d2 = (x as f64 - f.x).powi(2) + (y as f64 - f.y).powi(2);
                s += weight * (-d2 / (2.0 * sigma * sigma)).exp();
            }
            raw[y * w + x] = s;
        }
    }
    let max = raw.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        raw.iter_mut().for_each(|v| *v /= max);
    }
    raw
}

fn fixation(x: f64, y: f64, duration: Option<f64>) -> Fixation {
    Fixation {
        x,
        y,
        duration,
        observer_id: "o".into(),
        index: 0,
        onset: None,
    }
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (w, h) = (64, 64);
    let mut worst = 0.0f64;
    for inst in 0..50 {
        let n = rng.random_range(1..=12);
        let mode = inst % 3;
        let fix: Vec<Fixation> = (0..n)
            .map(|k| {
                let d = match mode {
                    0 => Some(rng.random_range(50.0..600.0)),
                    1 => None,
                    _ if k == 0 => None,
                    _ => Some(rng.random_range(50.0..600.0)),
                };
                fixation(rng.random_range(-8.0..72.0), rng.random_range(-8.0..72.0), d)
            })
            .collect();
        let got = build_density_map(&fix, w, h).map_err(|e| e.to_string())?;
        let want = oracle_density(&fix, w, h);
        for (i, (a, b)) in got.values().iter().zip(&want).enumerate() {
            let rel = if *b == 0.0 { a.abs() } else { (a - b).abs() / b.abs() };
            worst = worst.max(rel);
            if rel > 1e-9 {
                return Err(format!("instance {inst} pixel {i}: {a} vs oracle {b}"));
            }
        }
        let max = got.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max != 1.0 || got.values().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("instance {inst}: not max-normalized (max {max})"));
        }
    }

    let empty = build_density_map(&[], w, h).map_err(|e| e.to_string())?;
    if empty.values().iter().any(|v| *v != 0.0) {
        return Err("empty fixation list gives a non-zero map".into());
    }

    // Integer shifts of fixations on integer coordinates well inside the image.
    for _ in 0..20 {
        let base: Vec<Fixation> = (0..rng.random_range(1..=5))
            .map(|_| {
                fixation(
                    rng.random_range(26..=38) as f64,
                    rng.random_range(26..=38) as f64,
                    Some(rng.random_range(1..=9) as f64 * 50.0),
                )
            })
            .collect();
        let (dx, dy) = (rng.random_range(-6i64..=6), rng.random_range(-6i64..=6));
        let moved: Vec<Fixation> = base
            .iter()
            .map(|f| fixation(f.x + dx as f64, f.y + dy as f64, f.duration))
            .collect();
        let a = build_density_map(&base, w, h).map_err(|e| e.to_string())?;
        let b = build_density_map(&moved, w, h).map_err(|e| e.to_string())?;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (sx, sy) = (x + dx, y + dy);
                if sx < 0 || sy < 0 || sx >= w as i64 || sy >= h as i64 {
                    continue;
                }
                let (u, v) = (a.get(x as usize, y as usize), b.get(sx as usize, sy as usize));
                if u != v {
                    return Err(format!("shift ({dx},{dy}) changes pixel ({x},{y}): {u} vs {v}"));
                }
            }
        }
    }
    Ok(format!(
        "50 instances, worst relative error {worst:.1e}; normalization, empty and translation hold"
    ))
}

// ---------------------------------------------------------------------------
// Criterion 4: average precision

fn oracle_ap(labels: &[MatchLabel], n_positive: usize) -> f64 {
    if n_positive == 0 {
        return 0.0;
    }
    let ranked: Vec<bool> = labels
        .iter()
        .filter(|l| **l != MatchLabel::Ignored)
        .map(|l| *l == MatchLabel::TruePositive)
        .collect();
    let precision_at = |k: usize| ranked[..=k].iter().filter(|t| **t).count() as f64 / (k + 1) as f64;
    let mut ap = 0.0;
    for k in 0..ranked.len() {
        if ranked[k] {
            let best = (k..ranked.len()).map(precision_at).fold(0.0, f64::max);
            ap += best / n_positive as f64;
        }
    }
    ap
}

fn criterion_4() -> Verdict {
    use MatchLabel::*;
    let hand = average_precision(&[TruePositive, FalsePositive, TruePositive], 2).ap;
    if (hand - 5.0 / 6.0).abs() > 1e-12 {
        return Err(format!("[TP, FP, TP] with 2 positives gives {hand}, expected 5/6"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let len = rng.random_range(0..=60);
        let labels: Vec<MatchLabel> = (0..len)
            .map(|_| match rng.random_range(0..10) {
                0 => Ignored,
                1..=4 => TruePositive,
                _ => FalsePositive,
            })
            .collect();
        let tp = labels.iter().filter(|l| **l == TruePositive).count();
        let n_positive = if tp == 0 && rng.random_bool(0.3) {
            0
        } else {
            tp + rng.random_range(0..=5)
        };
        let got = average_precision(&labels, n_positive).ap;
        let want = oracle_ap(&labels, n_positive);
        worst = worst.max((got - want).abs());
        if (got - want).abs() > 1e-12 {
            return Err(format!("sequence {i}: {got} vs straightforward {want}"));
        }
    }
    Ok(format!(
        "5/6 case exact to {:.1e}; 1000 random sequences, worst error {worst:.1e}",
        (hand - 5.0 / 6.0).abs()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 5: gradient check

fn criterion_5() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let layout = ParamLayout {
        offsets: vec![0, 24],
        total: 40,
        floors: Vec::new(),
    };
    let h = 1e-6;
    let (mut points, mut worst) = (0, 0.0f64);
    while points < 100 {
        let c = if points % 2 == 0 { 0.01 } else { 1.0 };
        let examples: Vec<Example> = (0..40)
            .map(|_| {
                let block = rng.random_range(0..2);
                let len = layout.block(block).len();
                Example {
                    block,
                    label: if rng.random_bool(0.5) { 1.0 } else { -1.0 },
                    features: (0..len).map(|_| rng.random_range(-1.0f32..1.0)).collect(),
                }
            })
            .collect();
        let beta: Vec<f64> = (0..layout.total).map(|_| rng.random_range(-0.2..0.2)).collect();
        // Stay clear of hinge kinks: a step of h moves any margin by at most h * |phi|_1.
        let near_kink = examples.iter().any(|e| {
            let r = layout.block(e.block);
            let s: f64 = beta[r].iter().zip(&e.features).map(|(b, x)| b * *x as f64).sum();
            (1.0 - e.label as f64 * s).abs() < 1e-3
        });
        if near_kink {
            continue;
        }
        let (_, grad) = objective_and_gradient(&beta, &layout, &examples, c);
        for i in 0..layout.total {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (objective(&up, &layout, &examples, c) - objective(&down, &layout, &examples, c)) / (2.0 * h);
            let rel = (grad[i] - fd).abs() / grad[i].abs().max(fd.abs()).max(1e-12);
            worst = worst.max(rel);
            if rel > 1e-4 {
                return Err(format!(
                    "point {points} coordinate {i}: gradient {} vs finite difference {fd}",
                    grad[i]
                ));
            }
        }
        points += 1;
    }
    Ok(format!("100 points x 40 coordinates, worst relative error {worst:.1e}"))
}

// ---------------------------------------------------------------------------
// Criteria 6 to 10: end-to-end synthetic runs

const HARD_SEEDS: [u64; 3] = [0, 1, 2];
const NOISE_SCALES: [f64; 3] = [0.0, 1.0, 2.0];

fn experiment_spec(variant: Variant, seed: u64) -> ExperimentSpec {
    let mut spec = ExperimentSpec {
        variant,
        gaze_seed: seed,
        ..ExperimentSpec::default()
    };
    spec.train.sgd.seed = seed;
    spec
}

fn dataset(dir: &Path, spec: &SyntheticSpec) -> Dataset {
    generate_synthetic(spec, dir).expect("synthetic dataset");
    Dataset::load(&dir.join("manifest.json")).expect("dataset loads")
}

/// Every file written for an experiment, by relative path.
fn written_files(outcome: &ExperimentOutcome) -> Vec<(String, Vec<u8>)> {
    let dir = tempfile::tempdir().unwrap();
    write_outcome(outcome, dir.path()).expect("outcome written");
    let mut files = Vec::new();
    let mut stack = vec![dir.path().to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir.path()).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    files.sort();
    files
}

struct Run {
    label: String,
    outcome: ExperimentOutcome,
    seconds: f64,
}

fn run(label: String, ds: &Dataset, spec: &ExperimentSpec) -> Run {
    let start = Instant::now();
    let outcome = run_experiment(ds, spec).unwrap_or_else(|e| panic!("{label}: {e}"));
    let seconds = start.elapsed().as_secs_f64();
    eprintln!("  {label}: mAP {:.2} in {seconds:.0}s", 100.0 * outcome.report.map);
    Run {
        label,
        outcome,
        seconds,
    }
}

/// The default-set run and the hard-set runs, in a fixed order.
fn synthetic_runs(tmp: &Path, hard: bool) -> Vec<Run> {
    let mut runs = Vec::new();
    let default_ds = dataset(&tmp.join("default"), &SyntheticSpec::default());
    runs.push(run(
        "default/dpm".into(),
        &default_ds,
        &experiment_spec(Variant::BaselineDpm, 0),
    ));
    if !hard {
        return runs;
    }
    for seed in HARD_SEEDS {
        let spec = SyntheticSpec {
            seed,
            ..SyntheticSpec::hard()
        };
        let ds = dataset(&tmp.join(format!("hard{seed}")), &spec);
        runs.push(run(
            format!("hard{seed}/dpm"),
            &ds,
            &experiment_spec(Variant::BaselineDpm, seed),
        ));
        runs.push(run(
            format!("hard{seed}/gazedpm"),
            &ds,
            &experiment_spec(Variant::Gazedpm, seed),
        ));
        for s in &NOISE_SCALES[1..] {
            let variant = Variant::Noise { sigma_scale: *s };
            runs.push(run(
                format!("hard{seed}/noise{s}"),
                &ds,
                &experiment_spec(variant, seed),
            ));
        }
    }
    runs
}

fn find<'a>(runs: &'a [Run], label: &str) -> &'a Run {
    runs.iter().find(|r| r.label == label).expect("run present")
}

fn criterion_6(runs: &[Run]) -> Verdict {
    let r = find(runs, "default/dpm");
    let threads = available_threads();
    let per_class: Vec<String> = r
        .outcome
        .report
        .classes
        .iter()
        .map(|c| format!("{} {:.2}", c.class, 100.0 * c.ap))
        .collect();
    let detail = format!(
        "AP {} (mAP {:.2}); train+eval {:.0}s on {threads} thread(s)",
        per_class.join(", "),
        100.0 * r.outcome.report.map,
        r.seconds
    );
    let ap_ok = r.outcome.report.classes.iter().all(|c| c.ap >= 0.95);
    if ap_ok && r.seconds < 600.0 {
        Ok(detail)
    } else {
        Err(format!("{detail} (need every class AP >= 95 and < 600s)"))
    }
}

fn available_threads() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn criterion_7(runs: &[Run]) -> Verdict {
    let mut diffs = Vec::new();
    let mut parts = Vec::new();
    for seed in HARD_SEEDS {
        let dpm = find(runs, &format!("hard{seed}/dpm")).outcome.report.map;
        let gaze = find(runs, &format!("hard{seed}/gazedpm")).outcome.report.map;
        diffs.push(100.0 * (gaze - dpm));
        parts.push(format!(
            "seed {seed}: DPM {:.2} / GazeDPM {:.2}",
            100.0 * dpm,
            100.0 * gaze
        ));
    }
    let mean = diffs.iter().sum::<f64>() / diffs.len() as f64;
    let detail = format!("{}; mean paired gain {mean:.2} AP points", parts.join("; "));
    if mean >= 5.0 {
        Ok(detail)
    } else {
        Err(format!("{detail} (need >= 5)"))
    }
}

/// Label of the hard-set run at noise scale `s`. Scale 0 reuses the plain
/// GazeDPM run, which sees exactly the same maps (checked separately).
fn noise_label(seed: u64, s: f64) -> String {
    if s == 0.0 {
        format!("hard{seed}/gazedpm")
    } else {
        format!("hard{seed}/noise{s}")
    }
}

fn criterion_8(runs: &[Run], noise_zero_maps: &Verdict) -> Verdict {
    noise_zero_maps.clone()?;
    let means: Vec<f64> = NOISE_SCALES
        .iter()
        .map(|s| {
            HARD_SEEDS
                .iter()
                .map(|seed| 100.0 * find(runs, &noise_label(*seed, *s)).outcome.report.map)
                .sum::<f64>()
                / HARD_SEEDS.len() as f64
        })
        .collect();
    let detail = NOISE_SCALES
        .iter()
        .zip(&means)
        .map(|(s, m)| format!("sigma x{s}: {m:.2}"))
        .collect::<Vec<_>>()
        .join(", ");
    if means.windows(2).all(|w| w[1] <= w[0] + 1.0) {
        Ok(detail)
    } else {
        Err(format!("{detail} (an increase above 1 AP point)"))
    }
}

fn criterion_9(runs: &[Run]) -> Verdict {
    let r = find(runs, "default/dpm");
    let eps = r.outcome.report.spec.train.tolerance;
    let mut checked = 0;
    for (class, rounds) in group_by_class(&r.outcome) {
        for phase in [Phase::Warmup, Phase::Parts] {
            let seq: Vec<_> = rounds.iter().filter(|t| t.phase == phase).collect();
            for (i, t) in seq.iter().enumerate() {
                if t.objective > t.objective_before + eps * t.objective_before.abs() {
                    return Err(format!(
                        "{class} {phase:?} round {}: solve raised the objective {} -> {}",
                        t.round, t.objective_before, t.objective
                    ));
                }
                if i > 0 {
                    let prev = seq[i - 1].objective;
                    if t.objective > prev + eps * prev.abs() {
                        return Err(format!(
                            "{class} {phase:?} round {}: objective {} exceeds previous round's {prev}",
                            t.round, t.objective
                        ));
                    }
                }
                checked += 1;
            }
        }
    }
    Ok(format!("{checked} rounds, each within relative tolerance {eps:e}"))
}

fn group_by_class(outcome: &ExperimentOutcome) -> Vec<(String, Vec<gazedpm::train::RoundTelemetry>)> {
    let mut out: Vec<(String, Vec<_>)> = Vec::new();
    for (class, t) in &outcome.telemetry {
        match out.iter_mut().find(|(c, _)| c == class) {
            Some((_, v)) => v.push(t.clone()),
            None => out.push((class.clone(), vec![t.clone()])),
        }
    }
    out
}

fn criterion_10(first: &[Run], second: &[Run]) -> Verdict {
    let mut files = 0;
    for (a, b) in first.iter().zip(second) {
        let (fa, fb) = (written_files(&a.outcome), written_files(&b.outcome));
        if fa.len() != fb.len() {
            return Err(format!("{}: different file sets", a.label));
        }
        for ((pa, ba), (pb, bb)) in fa.iter().zip(&fb) {
            if pa != pb || ba != bb {
                return Err(format!("{}: {pa} differs between runs", a.label));
            }
        }
        files += fa.len();
    }
    Ok(format!(
        "{} runs repeated, {files} model/report/detection files byte-identical",
        first.len()
    ))
}

/// Noise at scale 0 must leave the rendered maps exactly as the plain
/// fixation recipe produces them.
fn noise_zero_is_identity(tmp: &Path) -> Verdict {
    let ds = Dataset::load(&tmp.join("hard0/manifest.json")).map_err(|e| e.to_string())?;
    let plain = GazeRecipe::fixations().prepare(&ds).map_err(|e| e.to_string())?;
    let noisy = Variant::Noise { sigma_scale: 0.0 }
        .recipe(0, Default::default())
        .prepare(&ds)
        .map_err(|e| e.to_string())?;
    for img in &ds.manifest.images {
        if plain.maps(&ds, &img.id).map_err(|e| e.to_string())?
            != noisy.maps(&ds, &img.id).map_err(|e| e.to_string())?
        {
            return Err(format!("noise x0 changes the map of {}", img.id));
        }
    }
    Ok(String::new())
}

// ---------------------------------------------------------------------------

fn report(n: usize, name: &str, verdict: &Verdict) -> bool {
    match verdict {
        Ok(d) => println!("PASS  criterion {n:>2}: {name}: {d}"),
        Err(d) => println!("FAIL  criterion {n:>2}: {name}: {d}"),
    }
    verdict.is_ok()
}

fn main() {
    let selected: BTreeSet<usize> = match std::env::var("GAZEDPM_ACCEPTANCE") {
        Ok(list) => list.split(',').filter_map(|s| s.trim().parse().ok()).collect(),
        Err(_) => (1..=10).collect(),
    };
    let mut ok = true;
    let cheap: [Check; 5] = [
        (1, "scoring matches exhaustive enumeration", criterion_1),
        (2, "zero gaze reduces to the image-only model", criterion_2),
        (3, "density maps match the pixelwise oracle", criterion_3),
        (4, "average precision matches the straightforward rule", criterion_4),
        (5, "subgradient matches finite differences", criterion_5),
    ];
    for (n, name, f) in cheap {
        if selected.contains(&n) {
            ok &= report(n, name, &f());
        }
    }

    if selected.iter().any(|n| *n >= 6) {
        let need_hard = selected.iter().any(|n| [7, 8, 10].contains(n));
        let tmp = tempfile::tempdir().expect("temp dir");
        eprintln!("running synthetic experiments");
        let runs = synthetic_runs(tmp.path(), need_hard);
        if selected.contains(&6) {
            ok &= report(6, "image-only DPM on the default synthetic set", &criterion_6(&runs));
        }
        if selected.contains(&7) {
            ok &= report(7, "gaze benefit on the hard synthetic set", &criterion_7(&runs));
        }
        if selected.contains(&8) {
            let identity = noise_zero_is_identity(tmp.path());
            ok &= report(8, "AP does not rise with gaze noise", &criterion_8(&runs, &identity));
        }
        if selected.contains(&9) {
            ok &= report(9, "objective descends across training rounds", &criterion_9(&runs));
        }
        if selected.contains(&10) {
            eprintln!("repeating synthetic experiments");
            let again = tempfile::tempdir().expect("temp dir");
            let repeat = synthetic_runs(again.path(), true);
            ok &= report(10, "repeated runs are byte-identical", &criterion_10(&runs, &repeat));
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
