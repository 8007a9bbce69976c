//! Fixation density maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gaze::fixation::Fixation;
use crate::grid::FloatGrid;
use crate::raster::resize_bilinear;

/// Gaussian width as a fraction of image height.
pub const SIGMA_FRACTION: f64 = 0.07;

/// Per-pixel intensity grid with every value in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DensityMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        DensityMap {
            width,
            height,
            values: vec![0.0; width * height],
        }
    }

    /// Wraps values that already satisfy the `[0, 1]` contract.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "density map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("density value {v} outside [0, 1]")));
        }
        Ok(DensityMap { width, height, values })
    }

    /// Divides non-negative raw values by their maximum. All-zero input stays zero.
    pub fn max_normalized(width: usize, height: usize, mut raw: Vec<f64>) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::invalid("raw density length mismatch"));
        }
        if let Some(v) = raw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::invalid(format!(
                "raw density value {v} is negative or not finite"
            )));
        }
        let max = raw.iter().copied().fold(0.0f64, f64::max);
        if max > 0.0 {
            for v in &mut raw {
                *v /= max;
            }
        }
        Ok(DensityMap {
            width,
            height,
            values: raw,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Bilinear resample followed by max-renormalization.
    pub fn resized(&self, width: usize, height: usize) -> DensityMap {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let raw = resize_bilinear(&self.values, self.width, self.height, width, height);
        DensityMap::max_normalized(width, height, raw).expect("resampled values stay in range")
    }

    pub fn to_grid(maps: &[DensityMap]) -> Result<FloatGrid> {
        let first = maps
            .first()
            .ok_or_else(|| Error::invalid("no density maps to encode"))?;
        if maps.iter().any(|m| m.width != first.width || m.height != first.height) {
            return Err(Error::invalid("density maps differ in size"));
        }
        Ok(FloatGrid {
            width: first.width,
            height: first.height,
            channels: maps.len(),
            data: maps.iter().flat_map(|m| m.values.iter().map(|&v| v as f32)).collect(),
        })
    }

    pub fn from_grid(grid: &FloatGrid) -> Result<Vec<DensityMap>> {
        (0..grid.channels)
            .map(|c| {
                let values = grid.plane(c).iter().map(|&v| v as f64).collect();
                DensityMap::from_values(grid.width, grid.height, values)
            })
            .collect()
    }

    /// 16-bit grayscale PNG, `round(65535 * v)`.
    pub fn save_png16(&self, path: &Path) -> Result<()> {
        let data: Vec<u16> = self.values.iter().map(|v| (v * 65535.0).round() as u16).collect();
        let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_raw(self.width as u32, self.height as u32, data)
                .expect("buffer length matches dimensions");
        img.save(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    /// Writes a PNG for `.png` paths and the raw float grid otherwise.
    pub fn save(maps: &[DensityMap], path: &Path) -> Result<()> {
        if is_png(path) {
            match maps {
                [m] => m.save_png16(path),
                _ => Err(Error::invalid("PNG output holds exactly one channel")),
            }
        } else {
            let grid = DensityMap::to_grid(maps)?;
            std::fs::write(path, grid.to_bytes()).map_err(|e| Error::io(path, e))
        }
    }

    /// Reads a PNG (8 or 16 bit, scaled to `[0, 1]`) or raw float grid.
    /// Values are returned as stored, without renormalization.
    pub fn load(path: &Path) -> Result<Vec<DensityMap>> {
        if is_png(path) {
            let img = image::ImageReader::open(path)
                .map_err(|e| Error::io(path, e))?
                .decode()
                .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
            let luma = img.to_luma16();
            let (w, h) = (luma.width() as usize, luma.height() as usize);
            let values = luma.into_raw().into_iter().map(|v| v as f64 / 65535.0).collect();
            Ok(vec![DensityMap::from_values(w, h, values)?])
        } else {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            let grid = FloatGrid::from_bytes(&bytes).map_err(|e| {
                Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::InvalidData, e.to_string()),
                )
            })?;
            DensityMap::from_grid(&grid)
        }
    }
}

pub(crate) fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Per-fixation Gaussian weights: durations, or 1 for every fixation when
/// any duration on the image is missing.
pub fn duration_weights(fixations: &[Fixation]) -> Vec<f64> {
    if fixations.iter().any(|f| f.duration.is_none()) {
        vec![1.0; fixations.len()]
    } else {
        fixations.iter().map(|f| f.duration.unwrap_or(1.0)).collect()
    }
}

/// Duration-weighted sum of isotropic Gaussians at the fixations,
/// max-normalized to `[0, 1]`.
///
/// Pixel `(i, j)` sits at coordinates `(i, j)`; the Gaussian standard
/// deviation is 7% of the image height.
pub fn build_density_map(fixations: &[Fixation], width: usize, height: usize) -> Result<DensityMap> {
    let weights = duration_weights(fixations);
    build_weighted_density_map(fixations, &weights, width, height)
}

/// Like [`build_density_map`] but with explicit per-fixation weights.
pub fn build_weighted_density_map(
    fixations: &[Fixation],
    weights: &[f64],
    width: usize,
    height: usize,
) -> Result<DensityMap> {
    let raw = raw_density(fixations, weights, width, height)?;
    DensityMap::max_normalized(width, height, raw)
}

/// Un-normalized weighted Gaussian sum. The Gaussian is separable, so each
/// fixation costs two 1-D evaluations plus one rank-1 update over the image;
/// no truncation is applied.
pub(crate) fn raw_density(fixations: &[Fixation], weights: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
    if width == 0 || height == 0 {
        return Err(Error::invalid(format!(
            "image size {width}x{height} has a zero dimension"
        )));
    }
    if weights.len() != fixations.len() {
        return Err(Error::invalid("one weight per fixation required"));
    }
    let sigma = SIGMA_FRACTION * height as f64;
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let mut raw = vec![0.0f64; width * height];
    let mut gx = vec![0.0f64; width];
    let mut gy = vec![0.0f64; height];
    for (f, &w) in fixations.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for (i, g) in gx.iter_mut().enumerate() {
            let d = i as f64 - f.x;
            *g = (-d * d * inv_two_var).exp();
        }
        for (j, g) in gy.iter_mut().enumerate() {
            let d = j as f64 - f.y;
            *g = w * (-d * d * inv_two_var).exp();
        }
        for (row, &wy) in raw.chunks_exact_mut(width).zip(&gy) {
            if wy == 0.0 {
                continue;
            }
            for (v, &wx) in row.iter_mut().zip(&gx) {
                *v += wy * wx;
            }
        }
    }
    Ok(raw)
}
