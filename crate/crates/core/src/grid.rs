//! Raw little-endian float32 grid format.
//!
//! Layout: 4-byte magic `GZGR`, then `width`, `height`, `channels` as
//! little-endian u32, then `width * height * channels` little-endian f32
//! values, channel-major (each channel is a full row-major plane).

use std::io::{Read, Write};

use crate::error::{Error, Result};

pub const GRID_MAGIC: &[u8; 4] = b"GZGR";

/// Hard cap on decoded values, so a corrupt header cannot request an
/// absurd allocation.
const MAX_VALUES: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq)]
pub struct FloatGrid {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl FloatGrid {
    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.width * self.height;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(GRID_MAGIC)?;
        for v in [self.width, self.height, self.channels] {
            w.write_all(&(v as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Decodes one grid record from the front of `r`.
    pub fn read_from<R: Read>(mut r: R) -> Result<FloatGrid> {
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != GRID_MAGIC {
            return Err(Error::parse("float grid", "bad magic"));
        }
        let width = read_u32(&mut r)? as usize;
        let height = read_u32(&mut r)? as usize;
        let channels = read_u32(&mut r)? as usize;
        let count = (width as u64)
            .checked_mul(height as u64)
            .and_then(|n| n.checked_mul(channels as u64))
            .filter(|&n| n <= MAX_VALUES)
            .ok_or_else(|| Error::parse("float grid", format!("grid too large: {width}x{height}x{channels}")))?;
        // Grow with the input rather than trusting the header.
        let mut bytes = Vec::new();
        r.by_ref()
            .take(count * 4)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::parse("float grid", e))?;
        if bytes.len() as u64 != count * 4 {
            return Err(Error::parse(
                "float grid",
                format!("truncated input: {} of {} data bytes", bytes.len(), count * 4),
            ));
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok(FloatGrid {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FloatGrid> {
        FloatGrid::read_from(bytes)
    }
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::parse("float grid", format!("truncated input: {e}")))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
