//! Model initialization: aspect-ratio components and energy-placed parts.

use crate::dpm::{Component, Deformation, Filter, Model, ModelMetadata, Part};
use crate::error::{Error, Result};
use crate::features::{compute_image_features, IMAGE_CHANNELS};
use crate::geometry::BBox;
use crate::raster::{resize_bilinear, Raster};
use crate::train::config::TrainConfig;

/// A positive example used for initialization.
#[derive(Debug, Clone, Copy)]
pub struct WarpSource<'a> {
    pub image: &'a Raster,
    pub bbox: BBox,
}

/// Splits example indices into `n` groups of consecutive aspect-ratio
/// (h / w) quantiles. Ties are ordered by index.
pub fn aspect_groups(boxes: &[BBox], n: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[a].aspect().total_cmp(&boxes[b].aspect()).then(a.cmp(&b)));
    (0..n)
        .map(|k| order[k * boxes.len() / n..(k + 1) * boxes.len() / n].to_vec())
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Root size in cells for a group: the group's median aspect at an area of
/// `area_cells`, capped by the smallest example's area in cells.
pub fn root_size(boxes: &[BBox], cell_size: usize, area_cells: usize) -> (usize, usize) {
    let aspect = median(boxes.iter().map(|b| b.aspect()).collect());
    let cs2 = (cell_size * cell_size) as f64;
    let smallest = boxes.iter().map(|b| b.area() / cs2).fold(f64::INFINITY, f64::min);
    let area = (area_cells as f64).min(smallest).max(1.0);
    let w = (area / aspect).sqrt().round().max(1.0) as usize;
    let h = (area * aspect).sqrt().round().max(1.0) as usize;
    (w, h)
}

fn sample(img: &Raster, x: f64, y: f64) -> f32 {
    let x = x.clamp(0.0, (img.width - 1) as f64);
    let y = y.clamp(0.0, (img.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = ((x - x0 as f64) as f32, (y - y0 as f64) as f32);
    let g = |x, y| img.get(x, y, 0);
    let top = g(x0, y0) * (1.0 - fx) + g(x1, y0) * fx;
    let bottom = g(x0, y1) * (1.0 - fx) + g(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Image features of `bbox` warped to `w x h` cells: the box plus a
/// one-cell margin is resampled to `(w + 2) x (h + 2)` cells and the
/// interior cells are returned (cell order, 31 channels each).
pub fn warped_features(src: &WarpSource, w: usize, h: usize, cell_size: usize) -> Result<Vec<f32>> {
    let gray = src.image.to_gray();
    let (tw, th) = ((w + 2) * cell_size, (h + 2) * cell_size);
    let cw = src.bbox.w / w as f64;
    let ch = src.bbox.h / h as f64;
    let (x0, y0) = (src.bbox.x - cw, src.bbox.y - ch);
    let (sx, sy) = ((src.bbox.w + 2.0 * cw) / tw as f64, (src.bbox.h + 2.0 * ch) / th as f64);
    let mut data = Vec::with_capacity(tw * th);
    for j in 0..th {
        for i in 0..tw {
            data.push(sample(
                &gray,
                x0 + (i as f64 + 0.5) * sx - 0.5,
                y0 + (j as f64 + 0.5) * sy - 0.5,
            ));
        }
    }
    let fm = compute_image_features(&Raster::from_gray(tw, th, data)?, cell_size)?;
    let mut out = Vec::with_capacity(w * h * IMAGE_CHANNELS);
    for y in 1..=h {
        for x in 1..=w {
            out.extend_from_slice(fm.cell(x, y));
        }
    }
    Ok(out)
}

/// Root-only model: one component per aspect group, the image block set to
/// the mean warped features of the group, the gaze block and biases zero.
/// Also returns the component index of each example.
pub fn init_components(
    positives: &[WarpSource],
    class_name: &str,
    gaze_channels: usize,
    config: &TrainConfig,
) -> Result<(Model, Vec<usize>)> {
    let n = config.n_components;
    if positives.len() < n.max(1) {
        return Err(Error::Data(format!(
            "{} positive example(s) cannot seed {n} component(s)",
            positives.len()
        )));
    }
    let boxes: Vec<BBox> = positives.iter().map(|p| p.bbox).collect();
    let channels = IMAGE_CHANNELS + gaze_channels;
    let mut assignment = vec![0; positives.len()];
    let mut components = Vec::with_capacity(n);
    for (k, group) in aspect_groups(&boxes, n).into_iter().enumerate() {
        let group_boxes: Vec<BBox> = group.iter().map(|&i| boxes[i]).collect();
        let (w, h) = root_size(&group_boxes, config.cell_size, config.root_area_cells);
        let mut sum = vec![0.0f64; w * h * IMAGE_CHANNELS];
        for &i in &group {
            assignment[i] = k;
            let f = warped_features(&positives[i], w, h, config.cell_size)?;
            for (s, v) in sum.iter_mut().zip(f) {
                *s += v as f64;
            }
        }
        let mut root = Filter::zeros(w, h, channels);
        for (cell, mean) in root
            .values
            .chunks_exact_mut(channels)
            .zip(sum.chunks_exact(IMAGE_CHANNELS))
        {
            for (c, m) in cell.iter_mut().zip(mean) {
                *c = (*m / group.len() as f64) as f32;
            }
        }
        components.push(Component::root_only(root));
    }
    let model = Model {
        class_name: class_name.to_string(),
        gaze_channels,
        cell_size: config.cell_size,
        levels_per_octave: config.levels_per_octave,
        components,
        metadata: ModelMetadata::default(),
    };
    Ok((model, assignment))
}

/// Root filter resampled to twice its size in each direction.
pub fn interpolate_root(root: &Filter) -> Filter {
    let (w, h, c) = (root.width, root.height, root.channels);
    let mut out = Filter::zeros(2 * w, 2 * h, c);
    for ch in 0..c {
        let plane: Vec<f64> = root.values.iter().skip(ch).step_by(c).map(|&v| v as f64).collect();
        let up = resize_bilinear(&plane, w, h, 2 * w, 2 * h);
        for (i, v) in up.into_iter().enumerate() {
            out.values[i * c + ch] = v as f32;
        }
    }
    out
}

fn overlap_area(a: (usize, usize), b: (usize, usize), size: usize) -> usize {
    let ox = (a.0 + size).min(b.0 + size).saturating_sub(a.0.max(b.0));
    let oy = (a.1 + size).min(b.1 + size).saturating_sub(a.1.max(b.1));
    ox * oy
}

/// Places up to `n_parts` square parts of side `size` on the doubled root,
/// each at the window with the most remaining positive-weight energy whose
/// overlap with every earlier part is at most half a part. Covered energy
/// is zeroed after each placement. Part filters copy the interpolated root.
pub fn init_parts(component: &Component, n_parts: usize, size: usize) -> Result<Component> {
    if n_parts == 0 {
        return Ok(component.clone());
    }
    let up = interpolate_root(&component.root);
    let (w, h) = (up.width, up.height);
    if w < size || h < size {
        return Err(Error::Config(format!(
            "a {}x{} root is too small for {size}x{size} parts at twice its resolution",
            component.root.width, component.root.height
        )));
    }
    let mut energy: Vec<f64> = up
        .values
        .chunks_exact(up.channels)
        .map(|cell| cell.iter().map(|&v| (v.max(0.0) as f64).powi(2)).sum())
        .collect();
    let mut anchors: Vec<(usize, usize)> = Vec::new();
    for _ in 0..n_parts {
        let mut best: Option<((usize, usize), f64)> = None;
        for ay in 0..=h - size {
            for ax in 0..=w - size {
                if anchors
                    .iter()
                    .any(|&a| 2 * overlap_area(a, (ax, ay), size) > size * size)
                {
                    continue;
                }
                let mut e = 0.0;
                for y in ay..ay + size {
                    e += energy[y * w + ax..y * w + ax + size].iter().sum::<f64>();
                }
                if best.is_none_or(|(_, b)| e > b) {
                    best = Some(((ax, ay), e));
                }
            }
        }
        let Some(((ax, ay), _)) = best else {
            log::warn!(
                "only {} of {n_parts} parts fit without excessive overlap",
                anchors.len()
            );
            break;
        };
        for y in ay..ay + size {
            energy[y * w + ax..y * w + ax + size].fill(0.0);
        }
        anchors.push((ax, ay));
    }
    let parts = anchors
        .into_iter()
        .map(|(ax, ay)| {
            let mut values = Vec::with_capacity(size * size * up.channels);
            for y in ay..ay + size {
                let start = (y * w + ax) * up.channels;
                values.extend_from_slice(&up.values[start..start + size * up.channels]);
            }
            Part {
                filter: Filter::from_values(size, size, up.channels, values).expect("window size"),
                anchor: (ax, ay),
                deformation: Deformation::default(),
            }
        })
        .collect();
    Ok(Component {
        root: component.root.clone(),
        parts,
        bias: component.bias,
    })
}
