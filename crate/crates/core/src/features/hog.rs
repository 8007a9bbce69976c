//! 31-channel gradient features: 18 contrast-sensitive orientation bins,
//! 9 contrast-insensitive bins and 4 gradient-energy channels, each cell
//! normalized against the four 2x2-cell blocks that contain it.

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::raster::Raster;

pub const IMAGE_CHANNELS: usize = 31;
pub const SIGNED_BINS: usize = 18;
pub const UNSIGNED_BINS: usize = 9;
/// Per-normalization truncation of the cell histogram.
pub const TRUNCATION: f32 = 0.2;

const EPS: f32 = 1e-4;
// 1 / sqrt(18)
const TEXTURE_SCALE: f32 = 0.235_702_27;

/// Order of the four normalization blocks, as (dx, dy) to the diagonal
/// neighbour: up-left, up-right, down-left, down-right. Mirroring the image
/// horizontally swaps 0<->1 and 2<->3.
pub const BLOCK_OFFSETS: [(isize, isize); 4] = [(-1, -1), (1, -1), (-1, 1), (1, 1)];

/// Computes features on a `floor(w / cell) x floor(h / cell)` cell grid.
///
/// Gradients use central differences (replicated borders); with several
/// colour channels the one with the largest magnitude wins. Each pixel votes
/// with its gradient magnitude into the two nearest orientation bins and the
/// four nearest cells (bilinear in both).
pub fn compute_image_features(image: &Raster, cell_size: usize) -> Result<FeatureMap> {
    if cell_size == 0 {
        return Err(Error::invalid("cell size must be >= 1"));
    }
    if image.width < cell_size || image.height < cell_size {
        return Err(Error::invalid(format!(
            "{}x{} image is smaller than one {cell_size}px cell",
            image.width, image.height
        )));
    }
    let cw = image.width / cell_size;
    let ch = image.height / cell_size;
    let hist = orientation_histograms(image, cell_size, cw, ch);

    let energy: Vec<f32> = (0..cw * ch)
        .map(|i| {
            let h = &hist[i * SIGNED_BINS..(i + 1) * SIGNED_BINS];
            (0..UNSIGNED_BINS).map(|b| (h[b] + h[b + UNSIGNED_BINS]).powi(2)).sum()
        })
        .collect();
    let e = |x: isize, y: isize| {
        let xi = x.clamp(0, cw as isize - 1) as usize;
        let yi = y.clamp(0, ch as isize - 1) as usize;
        energy[yi * cw + xi]
    };

    let mut values = vec![0.0f32; cw * ch * IMAGE_CHANNELS];
    for y in 0..ch {
        for x in 0..cw {
            let (xi, yi) = (x as isize, y as isize);
            let norms: [f32; 4] = BLOCK_OFFSETS.map(|(dx, dy)| {
                let s = e(xi, yi) + e(xi + dx, yi) + e(xi, yi + dy) + e(xi + dx, yi + dy);
                1.0 / (s + EPS).sqrt()
            });
            let h = &hist[(y * cw + x) * SIGNED_BINS..(y * cw + x + 1) * SIGNED_BINS];
            let out = &mut values[(y * cw + x) * IMAGE_CHANNELS..(y * cw + x + 1) * IMAGE_CHANNELS];
            let mut texture = [0.0f32; 4];
            for b in 0..SIGNED_BINS {
                let mut sum = 0.0;
                for (k, n) in norms.iter().enumerate() {
                    let v = (h[b] * n).min(TRUNCATION);
                    sum += v;
                    texture[k] += v;
                }
                out[b] = 0.5 * sum;
            }
            for b in 0..UNSIGNED_BINS {
                let hb = h[b] + h[b + UNSIGNED_BINS];
                let sum: f32 = norms.iter().map(|n| (hb * n).min(TRUNCATION)).sum();
                out[SIGNED_BINS + b] = 0.5 * sum;
            }
            for k in 0..4 {
                out[SIGNED_BINS + UNSIGNED_BINS + k] = TEXTURE_SCALE * texture[k];
            }
        }
    }
    Ok(FeatureMap {
        cells_w: cw,
        cells_h: ch,
        channels: IMAGE_CHANNELS,
        cell_size,
        scale: 1.0,
        values,
    })
}

fn orientation_histograms(image: &Raster, cell_size: usize, cw: usize, ch: usize) -> Vec<f32> {
    let (w, h) = (image.width, image.height);
    let vis_w = cw * cell_size;
    let vis_h = ch * cell_size;
    let bin_width = std::f32::consts::TAU / SIGNED_BINS as f32;
    let cs = cell_size as f32;
    let mut hist = vec![0.0f32; cw * ch * SIGNED_BINS];

    for y in 0..vis_h {
        let ym = y.saturating_sub(1);
        let yp = (y + 1).min(h - 1);
        let py = (y as f32 + 0.5) / cs - 0.5;
        let iy = py.floor();
        let fy = py - iy;
        let iy = iy as isize;
        for x in 0..vis_w {
            let xm = x.saturating_sub(1);
            let xp = (x + 1).min(w - 1);
            let mut best = (0.0f32, 0.0f32, -1.0f32);
            for c in 0..image.channels {
                let dx = image.get(xp, y, c) - image.get(xm, y, c);
                let dy = image.get(x, yp, c) - image.get(x, ym, c);
                let m2 = dx * dx + dy * dy;
                if m2 > best.2 {
                    best = (dx, dy, m2);
                }
            }
            let (dx, dy, m2) = best;
            if m2 <= 0.0 {
                continue;
            }
            let mag = m2.sqrt();
            let mut theta = dy.atan2(dx);
            if theta < 0.0 {
                theta += std::f32::consts::TAU;
            }
            let fb = theta / bin_width;
            let b0f = fb.floor();
            let wb1 = fb - b0f;
            let b0 = (b0f as usize) % SIGNED_BINS;
            let b1 = (b0 + 1) % SIGNED_BINS;

            let px = (x as f32 + 0.5) / cs - 0.5;
            let ix = px.floor();
            let fx = px - ix;
            let ix = ix as isize;
            for (cy, wy) in [(iy, 1.0 - fy), (iy + 1, fy)] {
                if cy < 0 || cy >= ch as isize || wy == 0.0 {
                    continue;
                }
                for (cx, wx) in [(ix, 1.0 - fx), (ix + 1, fx)] {
                    if cx < 0 || cx >= cw as isize || wx == 0.0 {
                        continue;
                    }
                    let base = (cy as usize * cw + cx as usize) * SIGNED_BINS;
                    let v = mag * wx * wy;
                    hist[base + b0] += v * (1.0 - wb1);
                    hist[base + b1] += v * wb1;
                }
            }
        }
    }
    hist
}

/// Channel permutation induced by mirroring the image left-right:
/// `mirrored[c] == original[perm[c]]` at the mirrored cell.
pub fn mirror_permutation() -> [usize; IMAGE_CHANNELS] {
    let mut p = [0usize; IMAGE_CHANNELS];
    for (b, slot) in p.iter_mut().enumerate().take(SIGNED_BINS) {
        *slot = (SIGNED_BINS + UNSIGNED_BINS - b) % SIGNED_BINS;
    }
    for b in 0..UNSIGNED_BINS {
        p[SIGNED_BINS + b] = SIGNED_BINS + (UNSIGNED_BINS - b) % UNSIGNED_BINS;
    }
    let t = SIGNED_BINS + UNSIGNED_BINS;
    p[t] = t + 1;
    p[t + 1] = t;
    p[t + 2] = t + 3;
    p[t + 3] = t + 2;
    p
}
