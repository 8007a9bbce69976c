use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::hog::{compute_image_features, IMAGE_CHANNELS};
use crate::features::FeatureMap;
use crate::gaze::DensityMap;
use crate::grid::{read_exact, read_u32, FloatGrid};
use crate::raster::Raster;

pub const DEFAULT_CELL_SIZE: usize = 8;
pub const DEFAULT_LEVELS_PER_OCTAVE: usize = 5;

const LEVEL_MAGIC: &[u8; 4] = b"GZLV";

/// Feature maps of one image at geometrically decreasing scales, finest first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    pub levels: Vec<FeatureMap>,
    pub levels_per_octave: usize,
    pub gaze_channels: usize,
    /// Original image size in pixels.
    pub image_width: usize,
    pub image_height: usize,
}

impl FeaturePyramid {
    pub fn channels(&self) -> usize {
        IMAGE_CHANNELS + self.gaze_channels
    }
}

/// Mean of the map's pixels inside each `cell_size` square cell. Cells that
/// stick out of the map average their in-bounds pixels only; cells with no
/// in-bounds pixel are 0.
pub fn pool_gaze_channel(map: &DensityMap, cell_size: usize, cells_w: usize, cells_h: usize) -> Vec<f64> {
    let mut out = vec![0.0; cells_w * cells_h];
    if cell_size == 0 {
        return out;
    }
    for cy in 0..cells_h {
        let y0 = cy * cell_size;
        let y1 = ((cy + 1) * cell_size).min(map.height());
        for cx in 0..cells_w {
            let x0 = cx * cell_size;
            let x1 = ((cx + 1) * cell_size).min(map.width());
            if y0 >= y1 || x0 >= x1 {
                continue;
            }
            let mut sum = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    sum += map.get(x, y);
                }
            }
            out[cy * cells_w + cx] = sum / ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    out
}

/// Builds a pyramid with levels at scales `2^(-i / levels_per_octave)`,
/// stopping once the cell grid gets smaller than `min_object_cells` on
/// either side. Each level holds 31 image channels followed by one pooled
/// channel per density map.
pub fn build_pyramid(
    image: &Raster,
    density_maps: &[DensityMap],
    cell_size: usize,
    levels_per_octave: usize,
    min_object_cells: usize,
) -> Result<FeaturePyramid> {
    build_scaled(image, density_maps, cell_size, levels_per_octave, min_object_cells, 1.0)
}

/// Same as [`build_pyramid`], but the first octave is computed on the image
/// upsampled 2x, so that part filters (at twice the root resolution) have a
/// level for every root placement at scale 1 and below.
pub fn build_detection_pyramid(
    image: &Raster,
    density_maps: &[DensityMap],
    cell_size: usize,
    levels_per_octave: usize,
    min_object_cells: usize,
) -> Result<FeaturePyramid> {
    build_scaled(image, density_maps, cell_size, levels_per_octave, min_object_cells, 2.0)
}

fn build_scaled(
    image: &Raster,
    density_maps: &[DensityMap],
    cell_size: usize,
    levels_per_octave: usize,
    min_object_cells: usize,
    base_scale: f64,
) -> Result<FeaturePyramid> {
    if cell_size == 0 || levels_per_octave == 0 {
        return Err(Error::invalid("cell size and levels per octave must be >= 1"));
    }
    if let Some(m) = density_maps
        .iter()
        .find(|m| m.width() != image.width || m.height() != image.height)
    {
        return Err(Error::invalid(format!(
            "density map {}x{} does not match image {}x{}",
            m.width(),
            m.height(),
            image.width,
            image.height
        )));
    }
    let min_cells = min_object_cells.max(1);
    let mut schedule = Vec::new();
    for i in 0.. {
        let scale = base_scale * 2f64.powf(-(i as f64) / levels_per_octave as f64);
        let w = (image.width as f64 * scale).round() as usize;
        let h = (image.height as f64 * scale).round() as usize;
        if w / cell_size < min_cells || h / cell_size < min_cells {
            break;
        }
        schedule.push((scale, w, h));
    }
    if schedule.is_empty() {
        return Err(Error::invalid(format!(
            "{}x{} image is too small for a {min_cells}-cell grid at cell size {cell_size}",
            image.width, image.height
        )));
    }
    let levels = schedule
        .par_iter()
        .map(|&(scale, w, h)| {
            let resized = image.resize(w, h);
            let mut fm = compute_image_features(&resized, cell_size)?;
            fm.scale = scale;
            if density_maps.is_empty() {
                return Ok(fm);
            }
            let pooled: Vec<Vec<f64>> = density_maps
                .iter()
                .map(|m| pool_gaze_channel(&m.resized(w, h), cell_size, fm.cells_w, fm.cells_h))
                .collect();
            Ok(fm.with_extra_channels(&pooled))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeaturePyramid {
        levels,
        levels_per_octave,
        gaze_channels: density_maps.len(),
        image_width: image.width,
        image_height: image.height,
    })
}

/// Debug dump: per level a `GZLV` header (level index u32, scale f64,
/// cell size u32, all little-endian) followed by a float grid record whose
/// channels are the feature channels.
pub fn write_pyramid_dump<W: Write>(pyramid: &FeaturePyramid, mut w: W) -> std::io::Result<()> {
    for (i, level) in pyramid.levels.iter().enumerate() {
        w.write_all(LEVEL_MAGIC)?;
        w.write_all(&(i as u32).to_le_bytes())?;
        w.write_all(&level.scale.to_le_bytes())?;
        w.write_all(&(level.cell_size as u32).to_le_bytes())?;
        let plane = level.cells_w * level.cells_h;
        let mut data = vec![0.0f32; plane * level.channels];
        for (p, cell) in level.values.chunks_exact(level.channels).enumerate() {
            for (c, v) in cell.iter().enumerate() {
                data[c * plane + p] = *v;
            }
        }
        FloatGrid {
            width: level.cells_w,
            height: level.cells_h,
            channels: level.channels,
            data,
        }
        .write_to(&mut w)?;
    }
    Ok(())
}

/// Parses a pyramid dump back into feature maps.
pub fn read_pyramid_dump(bytes: &[u8]) -> Result<Vec<FeatureMap>> {
    let mut r = bytes;
    let mut levels = Vec::new();
    while !r.is_empty() {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != LEVEL_MAGIC {
            return Err(Error::parse("pyramid dump", "bad level magic"));
        }
        let index = read_u32(&mut r)? as usize;
        if index != levels.len() {
            return Err(Error::parse(
                "pyramid dump",
                format!("expected level {}, found {index}", levels.len()),
            ));
        }
        let mut sb = [0u8; 8];
        read_exact(&mut r, &mut sb)?;
        let scale = f64::from_le_bytes(sb);
        let cell_size = read_u32(&mut r)? as usize;
        let grid = FloatGrid::read_from(&mut r)?;
        let plane = grid.width * grid.height;
        let mut values = vec![0.0f32; grid.data.len()];
        for c in 0..grid.channels {
            for p in 0..plane {
                values[p * grid.channels + c] = grid.data[c * plane + p];
            }
        }
        levels.push(FeatureMap {
            cells_w: grid.width,
            cells_h: grid.height,
            channels: grid.channels,
            cell_size,
            scale,
            values,
        });
    }
    Ok(levels)
}
