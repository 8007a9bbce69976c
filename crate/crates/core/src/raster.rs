//! Minimal float rasters plus PNG input/output.

use std::path::Path;

use crate::error::{Error, Result};

/// Interleaved float image with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Raster {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
        }
    }

    pub fn from_gray(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "gray raster needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            channels: 1,
            data,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn to_gray(&self) -> Raster {
        if self.channels == 1 {
            return self.clone();
        }
        let mut out = Raster::new(self.width, self.height, 1);
        for (i, px) in self.data.chunks_exact(self.channels).enumerate() {
            out.data[i] = if self.channels >= 3 {
                0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2]
            } else {
                px[0]
            };
        }
        out
    }

    /// Bilinear resize with pixel-center alignment.
    pub fn resize(&self, new_width: usize, new_height: usize) -> Raster {
        if new_width == self.width && new_height == self.height {
            return self.clone();
        }
        let mut out = Raster::new(new_width, new_height, self.channels);
        let plane_len = self.width * self.height;
        let mut plane = vec![0.0f64; plane_len];
        for c in 0..self.channels {
            for (i, v) in plane.iter_mut().enumerate() {
                *v = self.data[i * self.channels + c] as f64;
            }
            let resized = resize_bilinear(&plane, self.width, self.height, new_width, new_height);
            for (i, v) in resized.into_iter().enumerate() {
                out.data[i * self.channels + c] = v as f32;
            }
        }
        out
    }

    pub fn mirror_horizontal(&self) -> Raster {
        let mut out = Raster::new(self.width, self.height, self.channels);
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..self.channels {
                    out.set(self.width - 1 - x, y, c, self.get(x, y, c));
                }
            }
        }
        out
    }

    /// Rotate by 180 degrees.
    pub fn rotate180(&self) -> Raster {
        let mut out = self.clone();
        let n = self.width * self.height;
        for i in 0..n {
            for c in 0..self.channels {
                out.data[(n - 1 - i) * self.channels + c] = self.data[i * self.channels + c];
            }
        }
        out
    }

    pub fn load_gray(path: &Path) -> Result<Raster> {
        let img = image::ImageReader::open(path)
            .map_err(|e| Error::io(path, e))?
            .decode()
            .map_err(|e| Error::parse(path.display().to_string(), e))?;
        let luma = img.to_luma32f();
        Raster::from_gray(luma.width() as usize, luma.height() as usize, luma.into_raw())
    }

    /// Writes an 8-bit grayscale PNG (values clamped to `[0, 1]`).
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let gray = self.to_gray();
        let bytes: Vec<u8> = gray
            .data
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        let buf = image::GrayImage::from_raw(self.width as u32, self.height as u32, bytes)
            .expect("buffer length matches dimensions");
        buf.save(path).map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

/// Bilinear resampling of a single plane, pixel centers aligned.
pub fn resize_bilinear(src: &[f64], width: usize, height: usize, new_width: usize, new_height: usize) -> Vec<f64> {
    assert_eq!(src.len(), width * height);
    if new_width == width && new_height == height {
        return src.to_vec();
    }
    let xs = sample_positions(width, new_width);
    let ys = sample_positions(height, new_height);
    let mut out = Vec::with_capacity(new_width * new_height);
    for &(y0, y1, fy) in &ys {
        let row0 = &src[y0 * width..(y0 + 1) * width];
        let row1 = &src[y1 * width..(y1 + 1) * width];
        for &(x0, x1, fx) in &xs {
            let top = row0[x0] + (row0[x1] - row0[x0]) * fx;
            let bottom = row1[x0] + (row1[x1] - row1[x0]) * fx;
            out.push(top + (bottom - top) * fy);
        }
    }
    out
}

fn sample_positions(len: usize, new_len: usize) -> Vec<(usize, usize, f64)> {
    let ratio = len as f64 / new_len as f64;
    (0..new_len)
        .map(|i| {
            let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (len - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, s - i0 as f64)
        })
        .collect()
}
