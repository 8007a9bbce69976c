//! Generalized distance transform for quadratic deformation costs.

use serde::{Deserialize, Serialize};

use crate::dpm::filter::Grid;
use crate::error::{Error, Result};

/// Lower bound enforced on the quadratic deformation coefficients.
pub const DEFORMATION_FLOOR: f32 = 0.01;

/// Deformation cost `dx*dx_lin + dx^2*dx_quad + dy*dy_lin + dy^2*dy_quad`
/// for a displacement `(dx, dy)` of a part from its anchor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deformation {
    pub dx: f32,
    pub dx2: f32,
    pub dy: f32,
    pub dy2: f32,
}

impl Default for Deformation {
    fn default() -> Self {
        Deformation {
            dx: 0.0,
            dx2: 0.1,
            dy: 0.0,
            dy2: 0.1,
        }
    }
}

impl Deformation {
    pub fn new(dx: f32, dx2: f32, dy: f32, dy2: f32) -> Self {
        Deformation { dx, dx2, dy, dy2 }
    }

    #[inline]
    pub fn cost(&self, dx: i64, dy: i64) -> f64 {
        let (x, y) = (dx as f64, dy as f64);
        self.dx as f64 * x + self.dx2 as f64 * x * x + self.dy as f64 * y + self.dy2 as f64 * y * y
    }

    /// Raises the quadratic terms to [`DEFORMATION_FLOOR`].
    pub fn floored(self) -> Self {
        Deformation {
            dx2: self.dx2.max(DEFORMATION_FLOOR),
            dy2: self.dy2.max(DEFORMATION_FLOOR),
            ..self
        }
    }

    pub fn as_array(&self) -> [f32; 4] {
        [self.dx, self.dx2, self.dy, self.dy2]
    }
}

/// Result of [`distance_transform`]: for every destination cell `q`, the
/// best `resp(p) - cost(p - q)` and the source cell `p` attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTransform {
    pub values: Grid,
    pub argmax: Vec<(usize, usize)>,
}

impl DistanceTransform {
    #[inline]
    pub fn argmax_at(&self, x: usize, y: usize) -> (usize, usize) {
        self.argmax[y * self.values.width + x]
    }
}

/// `max_p resp(p) - def.cost(p - q)` for every `q`, separably in O(cells).
/// Among equal maxima the lowest source index wins along each axis.
pub fn distance_transform(resp: &Grid, def: &Deformation) -> Result<DistanceTransform> {
    if !(def.dx2 > 0.0 && def.dy2 > 0.0) {
        return Err(Error::invalid(format!(
            "quadratic deformation coefficients must be positive, got ({}, {})",
            def.dx2, def.dy2
        )));
    }
    let (w, h) = (resp.width, resp.height);
    let mut rows = vec![0.0; w * h];
    let mut arg_x = vec![0usize; w * h];
    let mut env = Envelope::with_capacity(w.max(h));
    for y in 0..h {
        let r = y * w..(y + 1) * w;
        env.transform(
            &resp.values[r.clone()],
            def.dx as f64,
            def.dx2 as f64,
            &mut rows[r.clone()],
            &mut arg_x[r],
        );
    }
    let mut values = vec![0.0; w * h];
    let mut argmax = vec![(0usize, 0usize); w * h];
    let mut col = vec![0.0; h];
    let mut out = vec![0.0; h];
    let mut arg_y = vec![0usize; h];
    for x in 0..w {
        for y in 0..h {
            col[y] = rows[y * w + x];
        }
        env.transform(&col, def.dy as f64, def.dy2 as f64, &mut out, &mut arg_y);
        for y in 0..h {
            let py = arg_y[y];
            values[y * w + x] = out[y];
            argmax[y * w + x] = (arg_x[py * w + x], py);
        }
    }
    Ok(DistanceTransform {
        values: Grid::new(w, h, values),
        argmax,
    })
}

/// Scratch space for the 1-D lower-envelope pass.
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Envelope {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }

    /// `dst[q] = max_p src[p] - lin*(p-q) - quad*(p-q)^2`.
    fn transform(&mut self, src: &[f64], lin: f64, quad: f64, dst: &mut [f64], arg: &mut [usize]) {
        let n = src.len();
        if n == 0 {
            return;
        }
        // Parabola p overtakes parabola r (r < p) for destinations q > s.
        let crossing = |r: usize, p: usize| -> f64 {
            let (rf, pf) = (r as f64, p as f64);
            ((src[p] - src[r]) / (quad * (rf - pf)) + rf + pf + lin / quad) / 2.0
        };
        let (v, z) = (&mut self.v, &mut self.z);
        let mut k = 0usize;
        v[0] = 0;
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for p in 1..n {
            let mut s = crossing(v[k], p);
            while s <= z[k] {
                k -= 1;
                s = crossing(v[k], p);
            }
            k += 1;
            v[k] = p;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        k = 0;
        for q in 0..n {
            while z[k + 1] < q as f64 {
                k += 1;
            }
            let p = v[k];
            let d = p as f64 - q as f64;
            dst[q] = src[p] - lin * d - quad * d * d;
            arg[q] = p;
        }
    }
}
