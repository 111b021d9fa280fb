use serde::{Deserialize, Serialize};

use crate::bench::BasicFunction;
use crate::error::{Error, Result};

pub const DEFAULT_BOUNDS: (f64, f64) = (-100.0, 100.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", content = "values")]
pub enum WeightMode {
    /// w_k = 10^u with u ~ U[0, 3], drawn from the instance seed.
    SeededLogUniform,
    Explicit(Vec<f64>),
}

/// Everything needed to assemble a composite instance deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceConfig {
    /// Nominal dimension, the sum of the subproblem dimensions.
    pub total_dim: usize,
    pub subproblem_dims: Vec<usize>,
    pub function_map: Vec<BasicFunction>,
    pub separability_degree: u8,
    pub weight_mode: WeightMode,
    pub seed: u64,
    pub bounds: (f64, f64),
}

impl InstanceConfig {
    /// Config with seeded weights and default bounds; `total_dim` is the sum of `dims`.
    pub fn new(dims: Vec<usize>, functions: Vec<BasicFunction>, degree: u8, seed: u64) -> Self {
        InstanceConfig {
            total_dim: dims.iter().sum(),
            subproblem_dims: dims,
            function_map: functions,
            separability_degree: degree,
            weight_mode: WeightMode::SeededLogUniform,
            seed,
            bounds: DEFAULT_BOUNDS,
        }
    }

    pub fn num_subproblems(&self) -> usize {
        self.subproblem_dims.len()
    }

    pub fn rotated(&self) -> bool {
        self.separability_degree >= 2
    }

    /// Fraction of the smaller neighbour shared between adjacent subproblems.
    pub fn overlap_ratio(&self) -> f64 {
        overlap_ratio(self.separability_degree)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.subproblem_dims.len();
        if k == 0 {
            return Err(Error::config("at least one subproblem is required"));
        }
        if self.function_map.len() != k {
            return Err(Error::config(format!(
                "function map has {} entries for {k} subproblems",
                self.function_map.len()
            )));
        }
        if self.subproblem_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("subproblem dimensions must be positive"));
        }
        if !(1..=5).contains(&self.separability_degree) {
            return Err(Error::config(format!(
                "separability degree must be in 1..=5, got {}",
                self.separability_degree
            )));
        }
        let sum: usize = self.subproblem_dims.iter().sum();
        if sum != self.total_dim {
            return Err(Error::config(format!(
                "subproblem dimensions sum to {sum} but total_dim is {}",
                self.total_dim
            )));
        }
        let (lo, hi) = self.bounds;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::config("bounds must be finite with lower < upper"));
        }
        if let WeightMode::Explicit(w) = &self.weight_mode {
            if w.len() != k {
                return Err(Error::config(format!("{} weights for {k} subproblems", w.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::config("weights must be positive and finite"));
            }
        }
        Ok(())
    }

    /// Number of variables shared between each adjacent pair `(k, k+1)`.
    ///
    /// The nominal count is floor(ratio * min(D_k, D_{k+1})). It is capped so that a
    /// window never reaches past its right neighbour into the next-but-one
    /// subproblem; the cap only binds at ratio 0.6 with similar-sized neighbours.
    pub fn overlap_counts(&self) -> Vec<usize> {
        let dims = &self.subproblem_dims;
        let ratio = self.overlap_ratio();
        let mut counts: Vec<usize> = Vec::with_capacity(dims.len().saturating_sub(1));
        for k in 0..dims.len().saturating_sub(1) {
            let nominal = (ratio * dims[k].min(dims[k + 1]) as f64).floor() as usize;
            let used_on_left = if k == 0 { 0 } else { counts[k - 1] };
            counts.push(nominal.min(dims[k] - used_on_left));
        }
        counts
    }

    pub fn effective_dim(&self) -> usize {
        self.subproblem_dims.iter().sum::<usize>() - self.overlap_counts().iter().sum::<usize>()
    }
}

pub fn overlap_ratio(degree: u8) -> f64 {
    match degree {
        3 => 0.2,
        4 => 0.4,
        5 => 0.6,
        _ => 0.0,
    }
}
