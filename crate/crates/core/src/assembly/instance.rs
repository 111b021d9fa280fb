use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{InstanceConfig, WeightMode};
use crate::bench::{eval_subproblem, BasicFunction, Rotation, TransformChain, COST_CEILING};
use crate::error::{Error, Result};

// independent RNG streams so that one component never perturbs another
const STREAM_WEIGHTS: u64 = 0;
const STREAM_OPTIMUM: u64 = 1;
const STREAM_PERMUTATION: u64 = 2;
const STREAM_ROTATION_BASE: u64 = 16;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Haar-distributed orthogonal matrix from the QR factors of a Gaussian matrix.
pub(crate) fn random_rotation(dim: usize, rng: &mut impl Rng) -> Rotation {
    let gaussian = DMatrix::<f64>::from_fn(dim, dim, |_, _| rng.sample(StandardNormal));
    let qr = gaussian.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    let mut data = Vec::with_capacity(dim * dim);
    for i in 0..dim {
        for j in 0..dim {
            data.push(q[(i, j)]);
        }
    }
    Rotation::from_parts_unchecked(dim, data)
}

/// An assembled composite objective `sum_k w_k f_k(z^(k))`.
#[derive(Debug)]
pub struct ProblemInstance {
    config: InstanceConfig,
    effective_dim: usize,
    weights: Vec<f64>,
    x_opt: Vec<f64>,
    /// Global variable order; subproblem `k` owns a contiguous window of it.
    layout: Vec<usize>,
    overlaps: Vec<usize>,
    /// Sorted variable indices of each subproblem.
    groups: Vec<Vec<usize>>,
    chains: Vec<TransformChain>,
    /// For each variable, the subproblems that read it.
    owners: Vec<Vec<usize>>,
    fe_counter: AtomicU64,
    out_of_bounds: AtomicU64,
    saturated: AtomicU64,
}

impl Clone for ProblemInstance {
    fn clone(&self) -> Self {
        ProblemInstance {
            config: self.config.clone(),
            effective_dim: self.effective_dim,
            weights: self.weights.clone(),
            x_opt: self.x_opt.clone(),
            layout: self.layout.clone(),
            overlaps: self.overlaps.clone(),
            groups: self.groups.clone(),
            chains: self.chains.clone(),
            owners: self.owners.clone(),
            fe_counter: AtomicU64::new(self.fe_count()),
            out_of_bounds: AtomicU64::new(self.out_of_bounds.load(Ordering::Relaxed)),
            saturated: AtomicU64::new(self.saturated.load(Ordering::Relaxed)),
        }
    }
}

impl ProblemInstance {
    /// Deterministically assemble an instance from its configuration.
    pub fn build(config: InstanceConfig) -> Result<Self> {
        config.validate()?;
        let k = config.num_subproblems();
        let overlaps = config.overlap_counts();
        let effective_dim = config.effective_dim();
        let (lo, hi) = config.bounds;

        let weights = match &config.weight_mode {
            WeightMode::Explicit(w) => w.clone(),
            WeightMode::SeededLogUniform => {
                let mut rng = stream(config.seed, STREAM_WEIGHTS);
                (0..k).map(|_| 10f64.powf(rng.random_range(0.0..3.0))).collect()
            }
        };

        let margin = 0.1 * (hi - lo);
        let mut rng = stream(config.seed, STREAM_OPTIMUM);
        let x_opt: Vec<f64> = (0..effective_dim)
            .map(|_| rng.random_range(lo + margin..hi - margin))
            .collect();

        let mut layout: Vec<usize> = (0..effective_dim).collect();
        layout.shuffle(&mut stream(config.seed, STREAM_PERMUTATION));

        let rotations: Vec<Option<Rotation>> = (0..k)
            .map(|i| {
                config.rotated().then(|| {
                    let mut rng = stream(config.seed, STREAM_ROTATION_BASE + i as u64);
                    random_rotation(config.subproblem_dims[i], &mut rng)
                })
            })
            .collect();

        Self::from_parts(config, weights, x_opt, layout, overlaps, rotations)
    }

    /// Assemble from explicit data; used by [`build`](Self::build) and document import.
    pub(crate) fn from_parts(
        config: InstanceConfig,
        weights: Vec<f64>,
        x_opt: Vec<f64>,
        layout: Vec<usize>,
        overlaps: Vec<usize>,
        rotations: Vec<Option<Rotation>>,
    ) -> Result<Self> {
        config.validate()?;
        let dims = &config.subproblem_dims;
        let k = dims.len();
        if weights.len() != k || rotations.len() != k {
            return Err(Error::config("weights/rotations must have one entry per subproblem"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::config("weights must be positive and finite"));
        }
        if overlaps.len() != k - 1 {
            return Err(Error::config("overlap list must have K-1 entries"));
        }
        for i in 0..k.saturating_sub(1) {
            let left_used = if i == 0 { 0 } else { overlaps[i - 1] };
            if overlaps[i] + left_used > dims[i] || overlaps[i] > dims[i + 1] {
                return Err(Error::config(format!("overlap count {i} exceeds a window")));
            }
        }
        if config.separability_degree <= 2 && overlaps.iter().any(|&o| o != 0) {
            return Err(Error::config("degrees 1 and 2 cannot have overlapping subproblems"));
        }
        let effective_dim = dims.iter().sum::<usize>() - overlaps.iter().sum::<usize>();
        if x_opt.len() != effective_dim || layout.len() != effective_dim {
            return Err(Error::config(format!(
                "x_opt and permutation must have the effective dimension {effective_dim}"
            )));
        }
        let mut seen = vec![false; effective_dim];
        for &v in &layout {
            if v >= effective_dim || seen[v] {
                return Err(Error::config("permutation is not a bijection"));
            }
            seen[v] = true;
        }

        let mut groups = Vec::with_capacity(k);
        let mut chains = Vec::with_capacity(k);
        let mut start = 0usize;
        for (i, rotation) in rotations.into_iter().enumerate() {
            let window = &layout[start..start + dims[i]];
            let mut sorted = window.to_vec();
            sorted.sort_unstable();
            // local permutation: window position j reads sorted position perm[j]
            let permutation: Vec<usize> = window
                .iter()
                .map(|v| sorted.binary_search(v).expect("window member"))
                .collect();
            let shift: Vec<f64> = sorted.iter().map(|&v| x_opt[v]).collect();
            let func = config.function_map[i];
            let mut chain = TransformChain::identity(func, dims[i]);
            chain.shift = shift;
            chain.permutation = permutation;
            chain.rotation = rotation;
            chain.validate()?;
            groups.push(sorted);
            chains.push(chain);
            if i + 1 < k {
                start += dims[i] - overlaps[i];
            }
        }

        let mut owners = vec![Vec::new(); effective_dim];
        for (g, members) in groups.iter().enumerate() {
            for &v in members {
                owners[v].push(g);
            }
        }

        Ok(ProblemInstance {
            config,
            effective_dim,
            weights,
            x_opt,
            layout,
            overlaps,
            groups,
            chains,
            owners,
            fe_counter: AtomicU64::new(0),
            out_of_bounds: AtomicU64::new(0),
            saturated: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &InstanceConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.effective_dim
    }

    pub fn num_subproblems(&self) -> usize {
        self.groups.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn x_opt(&self) -> &[f64] {
        &self.x_opt
    }

    pub fn bounds(&self) -> (f64, f64) {
        self.config.bounds
    }

    pub fn layout(&self) -> &[usize] {
        &self.layout
    }

    pub fn overlaps(&self) -> &[usize] {
        &self.overlaps
    }

    /// Ground-truth variable groups (sorted indices).
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn chains(&self) -> &[TransformChain] {
        &self.chains
    }

    pub fn function(&self, k: usize) -> BasicFunction {
        self.config.function_map[k]
    }

    pub fn fe_count(&self) -> u64 {
        self.fe_counter.load(Ordering::SeqCst)
    }

    pub fn out_of_bounds_count(&self) -> u64 {
        self.out_of_bounds.load(Ordering::Relaxed)
    }

    pub fn saturation_count(&self) -> u64 {
        self.saturated.load(Ordering::Relaxed)
    }

    pub fn reset_counters(&self) {
        self.fe_counter.store(0, Ordering::SeqCst);
        self.out_of_bounds.store(0, Ordering::Relaxed);
        self.saturated.store(0, Ordering::Relaxed);
    }

    /// Unweighted value of subproblem `k` at full-length point `x`.
    fn component(&self, k: usize, x: &[f64]) -> f64 {
        let sub: Vec<f64> = self.groups[k].iter().map(|&v| x[v]).collect();
        let cost = eval_subproblem(self.function(k), &self.chains[k], &sub)
            .expect("group and chain dimensions agree by construction");
        if cost.saturated {
            self.saturated.fetch_add(1, Ordering::Relaxed);
        }
        cost.value
    }

    fn combine(&self, components: &[f64]) -> f64 {
        let mut total = 0.0;
        for (w, c) in self.weights.iter().zip(components) {
            total += w * c;
        }
        if total.is_finite() && total <= COST_CEILING {
            total
        } else {
            COST_CEILING
        }
    }

    fn record_evaluation(&self, x: &[f64]) {
        self.fe_counter.fetch_add(1, Ordering::SeqCst);
        let (lo, hi) = self.config.bounds;
        if x.iter().any(|v| !(*v >= lo && *v <= hi)) {
            self.out_of_bounds.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// One function evaluation of the composite objective.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.effective_dim {
            return Err(Error::contract(format!(
                "instance expects {} coordinates, got {}",
                self.effective_dim,
                x.len()
            )));
        }
        self.record_evaluation(x);
        let components: Vec<f64> = (0..self.groups.len()).map(|k| self.component(k, x)).collect();
        Ok(self.combine(&components))
    }

    /// Objective over the coordinates in `group`, all others held at `base`.
    ///
    /// Each call counts as one evaluation and returns exactly what
    /// [`evaluate`](Self::evaluate) would on the patched point; only the
    /// subproblems touching `group` are recomputed.
    pub fn subspace(&self, base: &[f64], group: &[usize]) -> Result<SubspaceObjective<'_>> {
        if base.len() != self.effective_dim {
            return Err(Error::contract("base point has the wrong dimension"));
        }
        if group.iter().any(|&v| v >= self.effective_dim) {
            return Err(Error::contract("group index out of range"));
        }
        let mut affected: Vec<usize> = group.iter().flat_map(|&v| self.owners[v].iter().copied()).collect();
        affected.sort_unstable();
        affected.dedup();
        let cached: Vec<f64> = (0..self.groups.len()).map(|k| self.component(k, base)).collect();
        Ok(SubspaceObjective {
            instance: self,
            point: base.to_vec(),
            group: group.to_vec(),
            affected,
            cached,
        })
    }
}

/// See [`ProblemInstance::subspace`].
pub struct SubspaceObjective<'a> {
    instance: &'a ProblemInstance,
    point: Vec<f64>,
    group: Vec<usize>,
    affected: Vec<usize>,
    cached: Vec<f64>,
}

impl SubspaceObjective<'_> {
    pub fn dim(&self) -> usize {
        self.group.len()
    }

    pub fn group(&self) -> &[usize] {
        &self.group
    }

    /// Current values of the group's coordinates in the base point.
    pub fn base_values(&self) -> Vec<f64> {
        self.group.iter().map(|&v| self.point[v]).collect()
    }

    pub fn evaluate(&mut self, x_sub: &[f64]) -> f64 {
        assert_eq!(x_sub.len(), self.group.len(), "subspace point has the wrong dimension");
        for (&v, &value) in self.group.iter().zip(x_sub) {
            self.point[v] = value;
        }
        self.instance.record_evaluation(&self.point);
        let mut components = self.cached.clone();
        for &k in &self.affected {
            components[k] = self.instance.component(k, &self.point);
        }
        self.instance.combine(&components)
    }
}
