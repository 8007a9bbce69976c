//! Linear filters and their dense responses over feature maps.

use crate::error::{Error, Result};
use crate::features::FeatureMap;

/// `height x width x channels` weight tensor (channel fastest), stored as f32.
#[derive(Debug, Clone, PartialEq)]
pub struct Filter {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub values: Vec<f32>,
}

impl Filter {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Filter {
            width,
            height,
            channels,
            values: vec![0.0; width * height * channels],
        }
    }

    pub fn from_values(width: usize, height: usize, channels: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "{width}x{height}x{channels} filter needs {} values, got {}",
                width * height * channels,
                values.len()
            )));
        }
        Ok(Filter {
            width,
            height,
            channels,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, c: usize) -> f32 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        let n = self.width * self.channels;
        &self.values[y * n..(y + 1) * n]
    }

    /// Values of channel range `lo..hi` at every cell, in cell order.
    pub fn channel_block(&self, lo: usize, hi: usize) -> Vec<f32> {
        self.values
            .chunks_exact(self.channels)
            .flat_map(|cell| cell[lo..hi].iter().copied())
            .collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Dense row-major grid of responses or scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl Grid {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Grid { width, height, values }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }
}

#[inline]
pub(crate) fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for i in 0..4 {
            acc[i] += x[i] as f64 * y[i] as f64;
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += *x as f64 * *y as f64;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Cross-correlation of `filter` with `map` where the map is first
/// surrounded by `pad_x` / `pad_y` zero cells. Output cell `(x, y)` is the
/// response with the filter's top-left cell on padded cell `(x, y)`; the
/// output is `(cells_w + 2 pad_x - fw + 1) x (cells_h + 2 pad_y - fh + 1)`.
pub fn filter_response(map: &FeatureMap, filter: &Filter, pad_x: usize, pad_y: usize) -> Result<Grid> {
    if filter.channels != map.channels {
        return Err(Error::invalid(format!(
            "filter has {} channels, feature map has {}",
            filter.channels, map.channels
        )));
    }
    if filter.width == 0 || filter.height == 0 {
        return Err(Error::invalid("empty filter"));
    }
    if map.cells_w + 2 * pad_x < filter.width || map.cells_h + 2 * pad_y < filter.height {
        return Err(Error::invalid(format!(
            "{}x{} filter does not fit a {}x{} map padded by ({pad_x}, {pad_y})",
            filter.width, filter.height, map.cells_w, map.cells_h
        )));
    }
    let padded = map.padded(pad_x, pad_y);
    Ok(correlate(&padded, 0, 0, padded.cells_w, padded.cells_h, filter))
}

/// Valid correlation over the window of `map` starting at `(x0, y0)` with
/// size `win_w x win_h`. The caller guarantees the filter fits.
pub(crate) fn correlate(map: &FeatureMap, x0: usize, y0: usize, win_w: usize, win_h: usize, filter: &Filter) -> Grid {
    let out_w = win_w + 1 - filter.width;
    let out_h = win_h + 1 - filter.height;
    let mut out = vec![0.0f64; out_w * out_h];
    let span = filter.width * filter.channels;
    for fy in 0..filter.height {
        let frow = filter.row(fy);
        if frow.iter().all(|&v| v == 0.0) {
            continue;
        }
        for oy in 0..out_h {
            let base = ((y0 + oy + fy) * map.cells_w + x0) * map.channels;
            let mrow = &map.values[base..base + (out_w - 1) * map.channels + span];
            let orow = &mut out[oy * out_w..(oy + 1) * out_w];
            for (ox, o) in orow.iter_mut().enumerate() {
                let s = ox * map.channels;
                *o += dot(&mrow[s..s + span], frow);
            }
        }
    }
    Grid::new(out_w, out_h, out)
}
