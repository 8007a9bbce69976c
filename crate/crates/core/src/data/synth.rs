//! Deterministic synthetic detection datasets with planted fixations.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::manifest::{Annotation, DatasetManifest, ImageEntry, Split};
use crate::error::{Error, Result};
use crate::gaze::{write_fixations, Fixation, FixationRecord};
use crate::geometry::BBox;
use crate::raster::Raster;

/// Generator parameters. Ranges are inclusive `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_train: usize,
    pub n_test: usize,
    pub width: usize,
    pub height: usize,
    /// Number of object classes; class `k` uses texture period `texture_periods[k]`.
    pub n_classes: usize,
    pub texture_periods: Vec<f64>,
    /// Side lengths of planted objects, drawn independently for w and h.
    pub object_size: [f64; 2],
    pub objects_per_image: [usize; 2],
    /// Fraction of images without any planted object.
    pub background_fraction: f64,
    /// Untextured rectangles added as clutter.
    pub clutter: [usize; 2],
    /// Unannotated, unfixated textured boxes that mimic objects.
    pub lookalikes: [usize; 2],
    pub lookalike_size: [f64; 2],
    pub lookalike_contrast: f64,
    pub pixel_noise: f64,
    pub observers: usize,
    pub fixations_per_object: usize,
    /// Standard deviation (pixels) of fixations around object centres.
    pub fixation_jitter: f64,
    /// Probability that a fixation lands uniformly in the image instead.
    pub spurious_rate: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_train: 300,
            n_test: 200,
            width: 96,
            height: 96,
            n_classes: 2,
            texture_periods: vec![24.0, 10.0],
            object_size: [40.0, 56.0],
            objects_per_image: [1, 1],
            background_fraction: 0.2,
            clutter: [0, 2],
            lookalikes: [0, 0],
            lookalike_size: [32.0, 44.0],
            lookalike_contrast: 0.8,
            pixel_noise: 0.03,
            observers: 3,
            fixations_per_object: 3,
            fixation_jitter: 5.0,
            spurious_rate: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// Single-class variant with one or two look-alikes per image that
    /// match objects in texture, contrast and size, so only fixations tell
    /// them apart; a fifth of the fixations are spurious.
    pub fn hard() -> Self {
        SyntheticSpec {
            n_classes: 1,
            texture_periods: vec![24.0],
            lookalikes: [1, 2],
            lookalike_size: [40.0, 56.0],
            lookalike_contrast: 1.0,
            spurious_rate: 0.2,
            ..Self::default()
        }
    }

    pub fn class_name(k: usize) -> String {
        format!("pattern{k}")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.width == 0 || self.height == 0 {
            return bad("image size must be positive");
        }
        if self.n_classes == 0 || self.texture_periods.len() != self.n_classes {
            return bad("one texture period per class is required");
        }
        if self.texture_periods.iter().any(|p| p.is_nan() || *p <= 0.0) {
            return bad("texture periods must be positive");
        }
        for (name, r) in [
            ("object_size", self.object_size),
            ("lookalike_size", self.lookalike_size),
        ] {
            if !(r[0] >= 2.0 && r[0] <= r[1] && r[1] <= self.width.min(self.height) as f64) {
                return Err(Error::Config(format!(
                    "synthetic spec: {name} must satisfy 2 <= min <= max <= image side"
                )));
            }
        }
        for (name, r) in [
            ("objects_per_image", self.objects_per_image),
            ("clutter", self.clutter),
            ("lookalikes", self.lookalikes),
        ] {
            if r[0] > r[1] {
                return Err(Error::Config(format!("synthetic spec: {name} min exceeds max")));
            }
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.background_fraction) || !unit(self.spurious_rate) || !unit(self.lookalike_contrast) {
            return bad("fractions and contrast must lie in [0, 1]");
        }
        if !(self.fixation_jitter >= 0.0 && self.pixel_noise >= 0.0) {
            return bad("jitter and noise must be >= 0");
        }
        Ok(())
    }
}

/// One rendered image with its ground truth and fixations.
#[derive(Debug, Clone)]
pub struct SyntheticImage {
    pub id: String,
    pub image: Raster,
    pub objects: Vec<(usize, BBox)>,
    pub lookalikes: Vec<BBox>,
    pub fixations: Vec<Fixation>,
}

/// Texture of class pattern with `period` at offset `(u, v)` inside the
/// object, in `[-1, 1]`, with a dark frame two pixels wide.
fn pattern(u: f64, v: f64, w: f64, h: f64, period: f64) -> f64 {
    if u < 2.0 || v < 2.0 || u >= w - 2.0 || v >= h - 2.0 {
        return -1.0;
    }
    let s = (2.0 * PI * u / period).sin() * (2.0 * PI * v / period).sin();
    s.signum() * s.abs().sqrt()
}

fn place(rng: &mut ChaCha8Rng, taken: &[BBox], size: [f64; 2], w: usize, h: usize) -> Option<BBox> {
    for _ in 0..200 {
        let bw = rng.random_range(size[0]..=size[1]).round();
        let bh = rng.random_range(size[0]..=size[1]).round();
        let x = rng.random_range(0.0..=(w as f64 - bw)).round();
        let y = rng.random_range(0.0..=(h as f64 - bh)).round();
        let b = BBox::new(x, y, bw, bh);
        let grown = |t: &BBox| BBox::new(t.x - 2.0, t.y - 2.0, t.w + 4.0, t.h + 4.0);
        if taken.iter().all(|t| grown(t).intersection(&b) == 0.0) {
            return Some(b);
        }
    }
    None
}

fn paint_texture(data: &mut [f32], width: usize, b: &BBox, period: f64, contrast: f64) {
    for y in b.y as usize..(b.y + b.h) as usize {
        for x in b.x as usize..(b.x + b.w) as usize {
            let t = pattern(x as f64 - b.x, y as f64 - b.y, b.w, b.h, period);
            data[y * width + x] = (0.5 + 0.4 * contrast * t) as f32;
        }
    }
}

/// Renders image `i` of the dataset described by `spec`.
pub fn render_image(spec: &SyntheticSpec, i: usize) -> SyntheticImage {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(i as u64 + 1);
    let (w, h) = (spec.width, spec.height);

    // Smooth background clutter.
    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.02..0.08),
                rng.random_range(0.0..PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.03..0.08),
            )
        })
        .collect();
    let mut data = vec![0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut v = 0.5;
            for &(f, theta, phase, amp) in &waves {
                v += amp * (2.0 * PI * f * (x as f64 * theta.cos() + y as f64 * theta.sin()) + phase).sin();
            }
            data[y * w + x] = v as f32;
        }
    }

    let mut taken: Vec<BBox> = Vec::new();
    let mut objects = Vec::new();
    if rng.random::<f64>() >= spec.background_fraction {
        let n = rng.random_range(spec.objects_per_image[0]..=spec.objects_per_image[1]);
        for _ in 0..n {
            let class = rng.random_range(0..spec.n_classes);
            if let Some(b) = place(&mut rng, &taken, spec.object_size, w, h) {
                taken.push(b);
                objects.push((class, b));
            }
        }
    }
    let mut lookalikes = Vec::new();
    let n = rng.random_range(spec.lookalikes[0]..=spec.lookalikes[1]);
    for _ in 0..n {
        let class = rng.random_range(0..spec.n_classes);
        if let Some(b) = place(&mut rng, &taken, spec.lookalike_size, w, h) {
            taken.push(b);
            lookalikes.push((class, b));
        }
    }
    let n = rng.random_range(spec.clutter[0]..=spec.clutter[1]);
    let mut clutter = Vec::new();
    for _ in 0..n {
        if let Some(b) = place(&mut rng, &taken, [8.0, 40.0], w, h) {
            taken.push(b);
            clutter.push((b, rng.random_range(0.15..0.85) as f32));
        }
    }
    for (b, level) in &clutter {
        for y in b.y as usize..(b.y + b.h) as usize {
            for x in b.x as usize..(b.x + b.w) as usize {
                data[y * w + x] = *level;
            }
        }
    }
    for &(class, b) in &objects {
        paint_texture(&mut data, w, &b, spec.texture_periods[class], 1.0);
    }
    for &(class, b) in &lookalikes {
        paint_texture(&mut data, w, &b, spec.texture_periods[class], spec.lookalike_contrast);
    }
    for v in &mut data {
        let noise = rng.random_range(-1.0..1.0) * spec.pixel_noise;
        let q = ((*v as f64 + noise).clamp(0.0, 1.0) * 255.0).round() as u8;
        *v = q as f32 / 255.0;
    }

    let xmax = (w as f64).next_down();
    let ymax = (h as f64).next_down();
    let mut fixations = Vec::new();
    for o in 0..spec.observers {
        let observer = format!("obs{o}");
        let mut targets: Vec<Option<(f64, f64)>> = Vec::new();
        for (_, b) in &objects {
            for _ in 0..spec.fixations_per_object {
                targets.push(Some(b.center()));
            }
        }
        if objects.is_empty() {
            targets.extend(std::iter::repeat_n(None, spec.fixations_per_object));
        }
        // Shuffle the visiting order.
        for k in (1..targets.len()).rev() {
            let j = rng.random_range(0..=k);
            targets.swap(k, j);
        }
        let mut t = rng.random_range(100.0..200.0f64).round();
        for (index, target) in targets.into_iter().enumerate() {
            let spurious = target.is_none() || rng.random::<f64>() < spec.spurious_rate;
            let (x, y, duration) = match target {
                Some((cx, cy)) if !spurious => {
                    let dx = gaussian(&mut rng) * spec.fixation_jitter;
                    let dy = gaussian(&mut rng) * spec.fixation_jitter;
                    (cx + dx, cy + dy, rng.random_range(200.0..400.0f64).round())
                }
                _ => (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(80.0..200.0f64).round(),
                ),
            };
            fixations.push(
                Fixation::new(
                    x.clamp(0.0, xmax),
                    y.clamp(0.0, ymax),
                    duration,
                    &observer,
                    index as u32,
                )
                .with_onset(t),
            );
            t += duration + rng.random_range(20.0..60.0f64).round();
        }
    }

    SyntheticImage {
        id: format!("syn{i:05}"),
        image: Raster::from_gray(w, h, data).expect("dimensions match"),
        objects,
        lookalikes: lookalikes.into_iter().map(|(_, b)| b).collect(),
        fixations,
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(rand_distr::StandardNormal)
}

/// Renders the dataset into `out_dir`: `images/<id>.png`, `fixations.csv`
/// and `manifest.json` (annotations and split). Returns the manifest.
pub fn generate_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let n = spec.n_train + spec.n_test;
    let rendered: Vec<SyntheticImage> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(|i| render_image(spec, i)).collect()
    };
    let mut images = Vec::with_capacity(n);
    let mut annotations = Vec::new();
    let mut records = Vec::new();
    for s in &rendered {
        let file = Path::new("images").join(format!("{}.png", s.id));
        s.image.save_png(&out_dir.join(&file))?;
        images.push(ImageEntry {
            id: s.id.clone(),
            file,
            width: spec.width,
            height: spec.height,
        });
        for &(class, bbox) in &s.objects {
            annotations.push(Annotation {
                image_id: s.id.clone(),
                class: SyntheticSpec::class_name(class),
                bbox,
                difficult: false,
            });
        }
        records.extend(s.fixations.iter().map(|f| FixationRecord {
            image_id: s.id.clone(),
            fixation: f.clone(),
        }));
    }
    let fix_path = out_dir.join("fixations.csv");
    let file = std::fs::File::create(&fix_path).map_err(|e| Error::io(&fix_path, e))?;
    write_fixations(std::io::BufWriter::new(file), &records)?;
    let ids: Vec<String> = images.iter().map(|m| m.id.clone()).collect();
    let manifest = DatasetManifest {
        root: None,
        images,
        annotations,
        fixations: Some("fixations.csv".into()),
        saliency_dir: None,
        split: Split {
            train: ids[..spec.n_train].to_vec(),
            test: ids[spec.n_train..].to_vec(),
        },
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_fixations_without_noise() {
        let spec = SyntheticSpec {
            spurious_rate: 0.0,
            fixation_jitter: 0.0,
            background_fraction: 0.0,
            ..SyntheticSpec::default()
        };
        for i in 0..10 {
            let s = render_image(&spec, i);
            assert!(!s.objects.is_empty());
            for f in &s.fixations {
                assert!(s.objects.iter().any(|(_, b)| b.center() == (f.x, f.y)));
            }
        }
    }

    #[test]
    fn rendering_is_deterministic_and_seed_dependent() {
        let spec = SyntheticSpec::hard();
        let a = render_image(&spec, 3);
        let b = render_image(&spec, 3);
        assert_eq!(a.image, b.image);
        assert_eq!(a.fixations, b.fixations);
        let c = render_image(&SyntheticSpec { seed: 1, ..spec }, 3);
        assert_ne!(a.image, c.image);
    }

    #[test]
    fn planted_boxes_are_inside_and_disjoint() {
        let spec = SyntheticSpec::hard();
        for i in 0..30 {
            let s = render_image(&spec, i);
            let all: Vec<BBox> = s
                .objects
                .iter()
                .map(|o| o.1)
                .chain(s.lookalikes.iter().copied())
                .collect();
            for (k, a) in all.iter().enumerate() {
                assert!(a.x >= 0.0 && a.y >= 0.0 && a.right() <= 96.0 && a.bottom() <= 96.0);
                for b in &all[k + 1..] {
                    assert_eq!(a.intersection(b), 0.0);
                }
            }
            for f in &s.fixations {
                assert!(f.x >= 0.0 && f.x < 96.0 && f.y >= 0.0 && f.y < 96.0);
            }
        }
    }

    #[test]
    fn bad_specs_are_rejected() {
        let spec = SyntheticSpec {
            texture_periods: vec![4.0],
            ..SyntheticSpec::default()
        };
        assert!(spec.validate().is_err());
        let spec = SyntheticSpec {
            object_size: [60.0, 40.0],
            ..SyntheticSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
