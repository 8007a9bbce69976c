//! Externally computed saliency maps used in place of fixation maps.

use std::path::Path;

use crate::error::{Error, Result};
use crate::gaze::density::{is_png, DensityMap};
use crate::grid::FloatGrid;
use crate::raster::resize_bilinear;

/// Loads an 8/16-bit grayscale PNG or single-channel raw float grid,
/// resamples it bilinearly to `width x height` and rescales it to max 1.
pub fn load_saliency_map(path: &Path, width: usize, height: usize) -> Result<DensityMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("target size has a zero dimension"));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_saliency_map(&bytes, is_png(path), width, height).map_err(|e| match e {
        Error::InvalidArgument(_) => e,
        other => Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidData, other.to_string()),
        ),
    })
}

/// [`load_saliency_map`] on in-memory file contents.
pub fn decode_saliency_map(bytes: &[u8], png: bool, width: usize, height: usize) -> Result<DensityMap> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("target size has a zero dimension"));
    }
    let bad = |msg: String| Error::parse("saliency map", msg);
    let (w, h, values) = if png {
        let img =
            image::load_from_memory_with_format(bytes, image::ImageFormat::Png).map_err(|e| bad(e.to_string()))?;
        let luma = img.to_luma16();
        let (w, h) = (luma.width() as usize, luma.height() as usize);
        (
            w,
            h,
            luma.into_raw()
                .into_iter()
                .map(|v| v as f64 / 65535.0)
                .collect::<Vec<_>>(),
        )
    } else {
        let grid = FloatGrid::from_bytes(bytes)?;
        if grid.channels != 1 {
            return Err(bad(format!("expected 1 channel, found {}", grid.channels)));
        }
        (grid.width, grid.height, grid.data.iter().map(|&v| v as f64).collect())
    };
    if w == 0 || h == 0 {
        return Err(bad("empty saliency map".into()));
    }
    if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(bad("saliency values must be finite and non-negative".into()));
    }
    let resampled = resize_bilinear(&values, w, h, width, height);
    DensityMap::max_normalized(width, height, resampled)
}
