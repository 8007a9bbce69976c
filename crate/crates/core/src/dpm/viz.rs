//! PNG renderings of trained filters and deformation costs.

use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};

use crate::dpm::dt::Deformation;
use crate::dpm::filter::Filter;
use crate::dpm::model::Model;
use crate::error::{Error, Result};
use crate::features::hog::{SIGNED_BINS, UNSIGNED_BINS};
use crate::features::IMAGE_CHANNELS;

const GLYPH: u32 = 20;
const HEAT_CELL: u32 = 16;
const BOWL_RADIUS: i64 = 4;
const BOWL_CELL: u32 = 12;

/// Diverging map from `t` in [-1, 1] to blue (negative) through grey to red (positive).
pub fn diverging_color(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    [
        (128.0 + 127.0 * t).round() as u8,
        (128.0 - 127.0 * t.abs()).round() as u8,
        (128.0 - 127.0 * t).round() as u8,
    ]
}

/// Orientation glyphs for the image block: one stick per unsigned
/// orientation, drawn along the edge direction with brightness
/// proportional to the positive weight.
pub fn render_hog_glyphs(filter: &Filter) -> GrayImage {
    let (w, h) = (filter.width as u32, filter.height as u32);
    let mut img = GrayImage::new(w * GLYPH, h * GLYPH);
    let weight = |x: usize, y: usize, o: usize| -> f64 {
        let a = filter.at(x, y, o) + filter.at(x, y, o + UNSIGNED_BINS) + filter.at(x, y, SIGNED_BINS + o);
        (a as f64).max(0.0)
    };
    let mut max = 0.0f64;
    for y in 0..filter.height {
        for x in 0..filter.width {
            for o in 0..UNSIGNED_BINS {
                max = max.max(weight(x, y, o));
            }
        }
    }
    if max <= 0.0 {
        return img;
    }
    let half = GLYPH as f64 / 2.0;
    for y in 0..filter.height {
        for x in 0..filter.width {
            let (cx, cy) = (x as f64 * GLYPH as f64 + half, y as f64 * GLYPH as f64 + half);
            for o in 0..UNSIGNED_BINS {
                let v = (255.0 * weight(x, y, o) / max).round() as u8;
                if v == 0 {
                    continue;
                }
                let theta = (o as f64 * 180.0 / UNSIGNED_BINS as f64 + 90.0).to_radians();
                let (dx, dy) = (theta.cos(), theta.sin());
                for step in -(GLYPH as i64) * 2..=(GLYPH as i64) * 2 {
                    let r = step as f64 * half / (2.0 * GLYPH as f64);
                    let px = (cx + r * dx).floor() as i64;
                    let py = (cy + r * dy).floor() as i64;
                    if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                        let p = img.get_pixel_mut(px as u32, py as u32);
                        p.0[0] = p.0[0].max(v);
                    }
                }
            }
        }
    }
    img
}

/// Gaze-block weights as signed heatmaps, one panel per gaze channel side by
/// side, colours scaled by the largest magnitude across the block.
pub fn render_gaze_heatmap(filter: &Filter) -> RgbImage {
    let g = filter.channels.saturating_sub(IMAGE_CHANNELS).max(1);
    let (w, h) = (filter.width as u32, filter.height as u32);
    let mut img = RgbImage::new(w * HEAT_CELL * g as u32, h * HEAT_CELL);
    let value = |x: usize, y: usize, k: usize| -> f64 {
        if IMAGE_CHANNELS + k < filter.channels {
            filter.at(x, y, IMAGE_CHANNELS + k) as f64
        } else {
            0.0
        }
    };
    let mut max = 0.0f64;
    for y in 0..filter.height {
        for x in 0..filter.width {
            for k in 0..g {
                max = max.max(value(x, y, k).abs());
            }
        }
    }
    for (px, py, pixel) in img.enumerate_pixels_mut() {
        let cx = (px / HEAT_CELL) as usize;
        let (k, x) = (cx / filter.width, cx % filter.width);
        let y = (py / HEAT_CELL) as usize;
        let t = if max > 0.0 { value(x, y, k) / max } else { 0.0 };
        *pixel = Rgb(diverging_color(t));
    }
    img
}

/// Deformation cost over displacements in `[-4, 4]^2`; dark is cheap.
pub fn render_deformation(def: &Deformation) -> GrayImage {
    let n = (2 * BOWL_RADIUS + 1) as u32;
    let costs: Vec<f64> = (-BOWL_RADIUS..=BOWL_RADIUS)
        .flat_map(|dy| (-BOWL_RADIUS..=BOWL_RADIUS).map(move |dx| def.cost(dx, dy)))
        .collect();
    let lo = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = costs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    GrayImage::from_fn(n * BOWL_CELL, n * BOWL_CELL, |x, y| {
        let c = costs[((y / BOWL_CELL) * n + x / BOWL_CELL) as usize];
        Luma([(255.0 * (c - lo) / span).round() as u8])
    })
}

/// Writes, per component `c`: `comp{c}_root_hog.png`, `comp{c}_part{i}_hog.png`,
/// `comp{c}_part{i}_deform.png`, and when the model has gaze channels
/// `comp{c}_root_gaze.png` and `comp{c}_part{i}_gaze.png`. Returns the paths in
/// writing order.
pub fn visualize_model(model: &Model, out_dir: &Path) -> Result<Vec<PathBuf>> {
    model.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut written = Vec::new();
    let mut save = |name: String, result: image::ImageResult<()>| -> Result<()> {
        let path = out_dir.join(name);
        result.map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&path, io),
            other => Error::io(&path, std::io::Error::other(other)),
        })?;
        written.push(path);
        Ok(())
    };
    for (c, comp) in model.components.iter().enumerate() {
        let name = format!("comp{c}_root_hog.png");
        save(name.clone(), render_hog_glyphs(&comp.root).save(out_dir.join(&name)))?;
        if model.gaze_channels > 0 {
            let name = format!("comp{c}_root_gaze.png");
            save(name.clone(), render_gaze_heatmap(&comp.root).save(out_dir.join(&name)))?;
        }
        for (i, part) in comp.parts.iter().enumerate() {
            let name = format!("comp{c}_part{i}_hog.png");
            save(name.clone(), render_hog_glyphs(&part.filter).save(out_dir.join(&name)))?;
            if model.gaze_channels > 0 {
                let name = format!("comp{c}_part{i}_gaze.png");
                save(
                    name.clone(),
                    render_gaze_heatmap(&part.filter).save(out_dir.join(&name)),
                )?;
            }
            let name = format!("comp{c}_part{i}_deform.png");
            save(
                name.clone(),
                render_deformation(&part.deformation).save(out_dir.join(&name)),
            )?;
        }
    }
    Ok(written)
}
