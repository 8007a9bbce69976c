//! Training configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::pyramid::{DEFAULT_CELL_SIZE, DEFAULT_LEVELS_PER_OCTAVE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgdConfig {
    /// Upper bound on passes over the examples per convex solve.
    pub epochs: usize,
    /// Initial step size `eta0` of `eta_t = eta0 / (1 + t / t0)`.
    pub eta0: f64,
    /// Step count over which the step size halves.
    pub t0: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            epochs: 30,
            eta0: 1e-3,
            t0: 20_000.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Hinge-loss weight `C` of the objective `||b||^2 + C * sum(hinge)`.
    pub c: f64,
    pub n_components: usize,
    pub n_parts: usize,
    /// Root-only rounds before parts are added.
    pub warmup_rounds: usize,
    pub outer_rounds: usize,
    /// Solve/mine repetitions allowed per round to reach descent.
    pub max_inner_iterations: usize,
    /// Budget of the hard-negative cache, in feature cells.
    pub negative_cache_cells: usize,
    pub sgd: SgdConfig,
    /// Relative objective change below which a solve stops.
    pub tolerance: f64,
    /// Minimum IoU between a positive's box and its latent window.
    pub min_overlap: f64,
    pub cell_size: usize,
    pub levels_per_octave: usize,
    /// Target root area in cells.
    pub root_area_cells: usize,
    /// Side of a part filter in part-level cells.
    pub part_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            c: 0.01,
            n_components: 2,
            n_parts: 8,
            warmup_rounds: 2,
            outer_rounds: 3,
            max_inner_iterations: 8,
            negative_cache_cells: 20_000_000,
            sgd: SgdConfig::default(),
            tolerance: 1e-3,
            min_overlap: 0.7,
            cell_size: DEFAULT_CELL_SIZE,
            levels_per_octave: DEFAULT_LEVELS_PER_OCTAVE,
            root_area_cells: 40,
            part_size: 6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return bad(format!("C must be a finite value >= 0, got {}", self.c));
        }
        if self.n_components == 0 {
            return bad("n_components must be >= 1".into());
        }
        if self.cell_size == 0 || self.levels_per_octave == 0 || self.root_area_cells == 0 || self.part_size == 0 {
            return bad("cell_size, levels_per_octave, root_area_cells and part_size must be >= 1".into());
        }
        if !(self.sgd.eta0 > 0.0 && self.sgd.t0 > 0.0) {
            return bad("sgd.eta0 and sgd.t0 must be positive".into());
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return bad("tolerance must be >= 0".into());
        }
        if !(self.min_overlap > 0.0 && self.min_overlap <= 1.0) {
            return bad("min_overlap must lie in (0, 1]".into());
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
