//! Cell-grid features and multi-scale pyramids mixing gradient and gaze channels.

pub mod hog;
pub mod pyramid;

pub use hog::{compute_image_features, IMAGE_CHANNELS};
pub use pyramid::{
    build_detection_pyramid, build_pyramid, pool_gaze_channel, read_pyramid_dump, write_pyramid_dump, FeaturePyramid,
};

/// Dense `cells_h x cells_w x channels` feature array (channel fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub cells_w: usize,
    pub cells_h: usize,
    pub channels: usize,
    /// Pixels per cell side in the resampled image of this level.
    pub cell_size: usize,
    /// Image scale of this level relative to the original image.
    pub scale: f64,
    pub values: Vec<f32>,
}

impl FeatureMap {
    pub fn zeros(cells_w: usize, cells_h: usize, channels: usize) -> Self {
        FeatureMap {
            cells_w,
            cells_h,
            channels,
            cell_size: 1,
            scale: 1.0,
            values: vec![0.0; cells_w * cells_h * channels],
        }
    }

    #[inline]
    pub fn cell(&self, x: usize, y: usize) -> &[f32] {
        let i = (y * self.cells_w + x) * self.channels;
        &self.values[i..i + self.channels]
    }

    #[inline]
    pub fn cell_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.cells_w + x) * self.channels;
        &mut self.values[i..i + self.channels]
    }

    /// Contiguous run of `len` cells starting at `(x, y)` along a row.
    #[inline]
    pub fn row_span(&self, x: usize, y: usize, len: usize) -> &[f32] {
        let i = (y * self.cells_w + x) * self.channels;
        &self.values[i..i + len * self.channels]
    }

    /// Copy surrounded by `pad_x` / `pad_y` zero cells on each side.
    pub fn padded(&self, pad_x: usize, pad_y: usize) -> FeatureMap {
        let w = self.cells_w + 2 * pad_x;
        let h = self.cells_h + 2 * pad_y;
        let mut out = FeatureMap {
            cells_w: w,
            cells_h: h,
            channels: self.channels,
            cell_size: self.cell_size,
            scale: self.scale,
            values: vec![0.0; w * h * self.channels],
        };
        let row_len = self.cells_w * self.channels;
        for y in 0..self.cells_h {
            let src = &self.values[y * row_len..(y + 1) * row_len];
            let start = ((y + pad_y) * w + pad_x) * self.channels;
            out.values[start..start + row_len].copy_from_slice(src);
        }
        out
    }

    /// Appends single-channel grids (one value per cell) as extra channels.
    pub fn with_extra_channels(&self, extra: &[Vec<f64>]) -> FeatureMap {
        let channels = self.channels + extra.len();
        let mut values = Vec::with_capacity(self.cells_w * self.cells_h * channels);
        for (i, cell) in self.values.chunks_exact(self.channels).enumerate() {
            values.extend_from_slice(cell);
            values.extend(extra.iter().map(|g| g[i] as f32));
        }
        FeatureMap {
            channels,
            values,
            ..self.clone()
        }
    }
}
