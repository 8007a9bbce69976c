//! Stochastic subgradient solver for the fixed-latent SVM objective.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dpm::{Model, DEFORMATION_FLOOR};
use crate::error::{Error, Result};
use crate::train::config::SgdConfig;

/// A labelled training example whose features belong to one parameter
/// block (component). An example may carry several latent candidates, in
/// which case it scores as the best of them.
pub trait TrainingExample: Sync {
    fn block(&self) -> usize;
    /// +1 or -1.
    fn label(&self) -> f64;
    fn candidates(&self) -> usize {
        1
    }
    /// Visits the possibly non-zero runs of candidate `k`'s feature vector
    /// as `(offset within the block, values)`.
    fn for_each_run(&self, k: usize, f: &mut dyn FnMut(usize, &[f32]));
}

/// An example with a dense feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub block: usize,
    pub label: f32,
    pub features: Vec<f32>,
}

impl TrainingExample for Example {
    fn block(&self) -> usize {
        self.block
    }

    fn label(&self) -> f64 {
        self.label as f64
    }

    fn for_each_run(&self, _k: usize, f: &mut dyn FnMut(usize, &[f32])) {
        f(0, &self.features)
    }
}

/// Where each component's parameters live in the stacked vector, and which
/// entries are quadratic deformation coefficients subject to the floor.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub offsets: Vec<usize>,
    pub total: usize,
    pub floors: Vec<usize>,
}

impl ParamLayout {
    pub fn for_model(model: &Model) -> Self {
        let mut offsets = Vec::new();
        let mut floors = Vec::new();
        let mut at = 0;
        for c in &model.components {
            offsets.push(at);
            let mut k = at + c.root.len();
            for p in &c.parts {
                k += p.filter.len();
                floors.push(k + 1);
                floors.push(k + 3);
                k += 4;
            }
            at += c.param_len();
        }
        ParamLayout {
            offsets,
            total: at,
            floors,
        }
    }

    pub fn block(&self, b: usize) -> Range<usize> {
        let end = self.offsets.get(b + 1).copied().unwrap_or(self.total);
        self.offsets[b]..end
    }
}

pub fn model_params(model: &Model) -> Vec<f64> {
    model.components.iter().flat_map(|c| c.params()).collect()
}

pub fn set_model_params(model: &mut Model, params: &[f64]) -> Result<()> {
    let layout = ParamLayout::for_model(model);
    if params.len() != layout.total {
        return Err(Error::invalid(format!(
            "expected {} parameters, got {}",
            layout.total,
            params.len()
        )));
    }
    for (b, c) in model.components.iter_mut().enumerate() {
        c.set_params(&params[layout.block(b)])?;
    }
    Ok(())
}

#[inline]
pub(crate) fn dot64(beta: &[f64], f: &[f32]) -> f64 {
    debug_assert_eq!(beta.len(), f.len());
    let mut acc = [0.0f64; 4];
    let cb = beta.chunks_exact(4);
    let cf = f.chunks_exact(4);
    let tail: f64 = cb
        .remainder()
        .iter()
        .zip(cf.remainder())
        .map(|(b, x)| b * *x as f64)
        .sum();
    for (b, x) in cb.zip(cf) {
        for i in 0..4 {
            acc[i] += b[i] * x[i] as f64;
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Best candidate score of `e` against its parameter block, and which
/// candidate attains it (the first on ties).
fn best_candidate<E: TrainingExample + ?Sized>(block: &[f64], e: &E) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..e.candidates() {
        let mut acc = 0.0;
        e.for_each_run(k, &mut |o, v| acc += dot64(&block[o..o + v.len()], v));
        if acc > best.0 {
            best = (acc, k);
        }
    }
    best
}

fn add_runs<E: TrainingExample + ?Sized>(block: &mut [f64], scale: f64, e: &E, k: usize) {
    e.for_each_run(k, &mut |o, v| {
        for (w, x) in block[o..o + v.len()].iter_mut().zip(v) {
            *w += scale * *x as f64;
        }
    });
}

/// Score of an example under `beta`.
pub fn example_score<E: TrainingExample + ?Sized>(beta: &[f64], layout: &ParamLayout, ex: &E) -> f64 {
    best_candidate(&beta[layout.block(ex.block())], ex).0
}

/// Sum over examples of `max(0, 1 - y * score)`.
pub fn hinge_sum<E: TrainingExample>(beta: &[f64], layout: &ParamLayout, examples: &[E]) -> f64 {
    // Terms are computed in parallel but summed in order, so the result does
    // not depend on the thread count.
    let terms: Vec<f64> = examples
        .par_iter()
        .map(|e| (1.0 - e.label() * example_score(beta, layout, e)).max(0.0))
        .collect();
    terms.iter().sum()
}

#[inline]
fn dot32(w: &[f32], x: &[f32]) -> f32 {
    let mut acc = [0.0f32; 8];
    let cw = w.chunks_exact(8);
    let cx = x.chunks_exact(8);
    let tail: f32 = cw.remainder().iter().zip(cx.remainder()).map(|(a, b)| a * b).sum();
    for (a, b) in cw.zip(cx) {
        for i in 0..8 {
            acc[i] += a[i] * b[i];
        }
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

/// Single-precision twin of `best_candidate` used inside the SGD loop.
fn best_candidate32<E: TrainingExample + ?Sized>(block: &[f32], e: &E) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for k in 0..e.candidates() {
        let mut acc = 0.0f64;
        e.for_each_run(k, &mut |o, v| acc += dot32(&block[o..o + v.len()], v) as f64);
        if acc > best.0 {
            best = (acc, k);
        }
    }
    best
}

/// Objective of `scale * v` with single-precision dot products.
fn approx_objective<E: TrainingExample>(v: &[f32], scale: f64, layout: &ParamLayout, examples: &[E], c: f64) -> f64 {
    let terms: Vec<f64> = examples
        .par_iter()
        .map(|e| {
            let s = scale * best_candidate32(&v[layout.block(e.block())], e).0;
            (1.0 - e.label() * s).max(0.0)
        })
        .collect();
    let norm: f64 = v.iter().map(|x| (*x as f64) * (*x as f64)).sum::<f64>() * scale * scale;
    norm + c * terms.iter().sum::<f64>()
}

pub fn squared_norm(beta: &[f64]) -> f64 {
    beta.iter().map(|v| v * v).sum()
}

/// `||beta||^2 + c * sum_i max(0, 1 - y_i <beta, phi_i>)`.
pub fn objective<E: TrainingExample>(beta: &[f64], layout: &ParamLayout, examples: &[E], c: f64) -> f64 {
    squared_norm(beta) + c * hinge_sum(beta, layout, examples)
}

/// Objective and one subgradient: `2 beta - c * sum over margin violators of y phi`.
pub fn objective_and_gradient<E: TrainingExample>(
    beta: &[f64],
    layout: &ParamLayout,
    examples: &[E],
    c: f64,
) -> (f64, Vec<f64>) {
    let mut grad: Vec<f64> = beta.iter().map(|v| 2.0 * v).collect();
    let mut hinge = 0.0;
    for e in examples {
        let r = layout.block(e.block());
        let (score, k) = best_candidate(&beta[r.clone()], e);
        let m = e.label() * score;
        if m < 1.0 {
            hinge += 1.0 - m;
            add_runs(&mut grad[r], -c * e.label(), e, k);
        }
    }
    (squared_norm(beta) + c * hinge, grad)
}

fn project(beta: &mut [f64], floors: &[usize]) {
    for &j in floors {
        if beta[j] < DEFORMATION_FLOOR as f64 {
            beta[j] = DEFORMATION_FLOOR as f64;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutcome {
    pub beta: Vec<f64>,
    pub objective: f64,
    pub initial_objective: f64,
    pub epochs: usize,
}

/// Minimizes the objective with per-example steps on
/// `||beta||^2 / (c n) + hinge_i`, projecting quadratic deformation
/// coefficients onto the floor after every step. Returns the best iterate
/// seen (never worse than the projected start).
pub fn optimize_convex<E: TrainingExample>(
    beta0: &[f64],
    layout: &ParamLayout,
    examples: &[E],
    c: f64,
    sgd: &SgdConfig,
    tolerance: f64,
) -> Result<SolveOutcome> {
    let n = examples.len();
    let mut start = beta0.to_vec();
    project(&mut start, &layout.floors);
    if c == 0.0 || n == 0 {
        let mut beta = vec![0.0; layout.total];
        project(&mut beta, &layout.floors);
        let obj = objective(&beta, layout, examples, c);
        let initial = objective(&start, layout, examples, c);
        return Ok(SolveOutcome {
            beta,
            objective: obj,
            initial_objective: initial,
            epochs: 0,
        });
    }
    let initial = objective(&start, layout, examples, c);
    let lambda = 2.0 / (c * n as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(sgd.seed);
    let mut order: Vec<usize> = (0..n).collect();
    // beta = scale * v, so the shrinkage of the regularizer costs O(1) per
    // step. The iterate is kept in single precision for speed; objectives
    // reported to the caller are recomputed exactly.
    let mut v: Vec<f32> = start.iter().map(|x| *x as f32).collect();
    let mut scale = 1.0f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut prev = approx_objective(&v, scale, layout, examples, c);
    let mut t = 0u64;
    let mut epochs = 0;
    for _ in 0..sgd.epochs {
        epochs += 1;
        for k in (1..n).rev() {
            order.swap(k, rng.random_range(0..=k));
        }
        for &i in &order {
            let e = &examples[i];
            let r = layout.block(e.block());
            let eta = sgd.eta0 / (1.0 + t as f64 / sgd.t0);
            let (score, k) = best_candidate32(&v[r.clone()], e);
            let margin = e.label() * scale * score;
            scale *= (1.0 - eta * lambda).max(0.0);
            if scale < 1e-6 {
                for x in &mut v {
                    *x = (*x as f64 * scale) as f32;
                }
                scale = 1.0;
            }
            if margin < 1.0 {
                let step = (eta * e.label() / scale) as f32;
                e.for_each_run(k, &mut |o, xs| {
                    for (w, x) in v[r.start + o..r.start + o + xs.len()].iter_mut().zip(xs) {
                        *w += step * *x;
                    }
                });
            }
            for &j in &layout.floors {
                if scale * (v[j] as f64) < DEFORMATION_FLOOR as f64 {
                    v[j] = (DEFORMATION_FLOOR as f64 / scale) as f32;
                }
            }
            t += 1;
        }
        let obj = approx_objective(&v, scale, layout, examples, c);
        if !obj.is_finite() || obj > 10.0 * initial.max(f64::MIN_POSITIVE) {
            return Err(Error::Numeric(format!(
                "SGD diverged: objective {obj:.6e} exceeds 10x the initial {initial:.6e} (eta0 = {}, t0 = {})",
                sgd.eta0, sgd.t0
            )));
        }
        if best.as_ref().is_none_or(|b| obj < b.0) {
            let mut beta: Vec<f64> = v.iter().map(|x| *x as f64 * scale).collect();
            project(&mut beta, &layout.floors);
            best = Some((obj, beta));
        }
        let improvement = prev - obj;
        prev = obj;
        if improvement < tolerance * obj.abs() {
            break;
        }
    }
    let (beta, objective) = match best {
        Some((_, beta)) => {
            let exact = objective(&beta, layout, examples, c);
            if exact <= initial {
                (beta, exact)
            } else {
                (start, initial)
            }
        }
        None => (start, initial),
    };
    Ok(SolveOutcome {
        beta,
        objective,
        initial_objective: initial,
        epochs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(n: usize) -> ParamLayout {
        ParamLayout {
            offsets: vec![0],
            total: n,
            floors: vec![],
        }
    }

    fn ex(label: f32, f: &[f32]) -> Example {
        Example {
            block: 0,
            label,
            features: f.to_vec(),
        }
    }

    #[test]
    fn zero_c_gives_zero_weights() {
        let l = layout(3);
        let data = vec![ex(1.0, &[1.0, 2.0, 3.0]), ex(-1.0, &[0.0, 1.0, 0.0])];
        let out = optimize_convex(&[0.5, -0.2, 0.1], &l, &data, 0.0, &SgdConfig::default(), 1e-3).unwrap();
        assert!(out.beta.iter().all(|&b| b == 0.0));
        assert_eq!(out.objective, 0.0);
    }

    #[test]
    fn separable_toy_reaches_hard_margin_solution() {
        // Points (+-2, 0) and (+-2, 1) with labels by the sign of x, plus a
        // bias feature. The hard-margin SVM is w = (0.5, 0), b = 0 with
        // ||beta||^2 = 0.25.
        let l = layout(3);
        let data = vec![
            ex(1.0, &[2.0, 0.0, 1.0]),
            ex(1.0, &[2.0, 1.0, 1.0]),
            ex(-1.0, &[-2.0, 0.0, 1.0]),
            ex(-1.0, &[-2.0, 1.0, 1.0]),
        ];
        let sgd = SgdConfig {
            epochs: 20_000,
            eta0: 1e-3,
            t0: 1e9,
            seed: 1,
        };
        let out = optimize_convex(&[0.0; 3], &l, &data, 1000.0, &sgd, 0.0).unwrap();
        let hinge = hinge_sum(&out.beta, &l, &data);
        assert!(hinge < 1e-3, "hinge {hinge}");
        assert!(
            (out.objective - 0.25).abs() <= 0.05 * 0.25,
            "objective {}",
            out.objective
        );
        assert!(out.objective <= out.initial_objective);
    }

    #[test]
    fn floors_are_respected() {
        let l = ParamLayout {
            offsets: vec![0],
            total: 2,
            floors: vec![1],
        };
        let data = vec![ex(1.0, &[1.0, -5.0]), ex(-1.0, &[-1.0, 5.0])];
        let out = optimize_convex(&[0.0, 1.0], &l, &data, 10.0, &SgdConfig::default(), 1e-6).unwrap();
        assert!(out.beta[1] >= DEFORMATION_FLOOR as f64);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let l = ParamLayout {
            offsets: vec![0, 3],
            total: 5,
            floors: vec![],
        };
        let data = vec![
            ex(1.0, &[0.3, -0.2, 1.0]),
            Example {
                block: 1,
                label: -1.0,
                features: vec![0.5, 1.0],
            },
        ];
        let beta = [0.1, 0.2, -0.3, 0.05, 0.4];
        let (_, g) = objective_and_gradient(&beta, &l, &data, 2.0);
        for j in 0..5 {
            let h = 1e-6;
            let mut p = beta;
            p[j] += h;
            let mut m = beta;
            m[j] -= h;
            let fd = (objective(&p, &l, &data, 2.0) - objective(&m, &l, &data, 2.0)) / (2.0 * h);
            assert!((fd - g[j]).abs() <= 1e-6 * fd.abs().max(1.0));
        }
    }
}
