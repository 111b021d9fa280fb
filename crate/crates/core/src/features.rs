//! The state vector observed by the agent: problem, population and
//! progress features of one subproblem at one decision step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decomp::DecompositionResult;
use crate::error::{Error, Result};
use crate::pool::{ContextMemory, PoolConfig};

pub const PROBLEM_FEATURES: usize = 3;
pub const POPULATION_FEATURES: usize = 5;
/// Probe samples per population feature extraction.
pub const PROBE_SAMPLES: usize = 3;
/// Tolerance below which a probed cost change counts as neutral.
pub const NEUTRAL_EPSILON: f64 = 1.0;
/// Costs at or below zero are lifted to this before any logarithm.
pub const COST_FLOOR: f64 = 1e-20;

/// Length of the state vector for a pool of `pool_size` optimizers.
pub fn state_len(pool_size: usize) -> usize {
    12 + 2 * pool_size
}

pub fn clamp_cost(c: f64) -> f64 {
    if c.is_nan() {
        f64::MAX
    } else {
        c.max(COST_FLOOR)
    }
}

/// `(D_k / 500)^0.4`, the feature that also drives the action mask.
pub fn dimension_feature(dim: usize) -> f64 {
    (dim as f64 / 500.0).powf(0.4)
}

pub fn problem_features(k: usize, decomposition: &DecompositionResult) -> Result<[f64; PROBLEM_FEATURES]> {
    let group = decomposition
        .groups
        .get(k)
        .ok_or_else(|| Error::contract(format!("subproblem {k} is not in the decomposition")))?;
    let separable = if decomposition.dsm.fully_separable() { 1.0 } else { 0.0 };
    let overlap = decomposition.shared_count() as f64 / decomposition.dim().max(1) as f64;
    Ok([dimension_feature(group.len()), separable, overlap])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationFeatures {
    pub values: [f64; POPULATION_FEATURES],
    /// Fewer than two individuals; all values are zero.
    pub degenerate: bool,
}

fn mean_pairwise_distance(points: &[&[f64]]) -> f64 {
    let n = points.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let sq: f64 = points[i].iter().zip(points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            total += sq.sqrt();
        }
    }
    2.0 * total / (n * (n - 1)) as f64
}

/// Dispersion, funnel difference, ANR, NI and NW. `probe[s][i]` is the
/// cost of individual `i` in sample `s`.
pub fn population_features(costs: &[f64], positions: &[Vec<f64>], probe: &[Vec<f64>], epsilon: f64) -> PopulationFeatures {
    let n = costs.len().min(positions.len());
    if n < 2 {
        return PopulationFeatures {
            values: [0.0; POPULATION_FEATURES],
            degenerate: true,
        };
    }
    let all: Vec<&[f64]> = positions[..n].iter().map(Vec::as_slice).collect();
    let d = mean_pairwise_distance(&all);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| costs[a].total_cmp(&costs[b]).then(a.cmp(&b)));
    let top_n = (n as f64 * 0.1).ceil().max(2.0) as usize;
    let top: Vec<&[f64]> = order[..top_n.min(n)].iter().map(|&i| positions[i].as_slice()).collect();
    let d_top = mean_pairwise_distance(&top);

    let s = probe.len();
    let (anr, ni, nw) = if s == 0 {
        (1.0, 1.0, 1.0)
    } else {
        let mut neutral = 0usize;
        let mut never_improved = 0usize;
        let mut not_always_worse = 0usize;
        for (i, &c) in costs[..n].iter().enumerate() {
            let sampled = || probe.iter().map(move |row| row[i]);
            neutral += sampled().filter(|cs| (c - cs).abs() < epsilon).count();
            if sampled().filter(|&cs| cs < c).count() == 0 {
                never_improved += 1;
            }
            if sampled().filter(|&cs| cs > c).count() < s {
                not_always_worse += 1;
            }
        }
        (
            neutral as f64 / (n * s) as f64,
            never_improved as f64 / n as f64,
            not_always_worse as f64 / n as f64,
        )
    };
    PopulationFeatures {
        values: [d, d_top - d, anr, ni, nw],
        degenerate: false,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeOutcome {
    /// One row of `N` costs per completed sample.
    pub costs: Vec<Vec<f64>>,
    pub fes: u64,
    /// The budget ran out before all requested samples completed.
    pub truncated: bool,
}

/// Advance cloned contexts of uniformly drawn pool members one step from
/// `positions` and record the resulting costs. Live contexts are untouched.
#[allow(clippy::too_many_arguments)]
pub fn probe_population(
    memory: &ContextMemory,
    pool: &PoolConfig,
    k: usize,
    positions: &[Vec<f64>],
    bounds: (f64, f64),
    samples: usize,
    fe_budget: u64,
    rng: &mut ChaCha8Rng,
    objective: &mut dyn FnMut(&[f64]) -> f64,
) -> ProbeOutcome {
    let n = positions.len();
    let dims = positions.first().map_or(0, Vec::len);
    let mut out = ProbeOutcome {
        costs: Vec::with_capacity(samples),
        fes: 0,
        truncated: false,
    };
    if n == 0 || pool.is_empty() {
        return out;
    }
    for _ in 0..samples {
        if out.fes + n as u64 > fe_budget {
            out.truncated = true;
            break;
        }
        let l = rng.random_range(0..pool.len());
        let mut ctx = memory.probe_context(k, l, pool.kind(l), dims, bounds, rng.random());
        let moved = ctx.perturb(positions, bounds);
        out.costs.push(moved.iter().map(|x| objective(x)).collect());
        out.fes += n as u64;
    }
    out
}

/// Run-level statistics owned by the runner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTelemetry {
    pub fes_used: u64,
    pub max_fes: u64,
    pub c0_star: f64,
    pub ct_star: f64,
    pub c_prev_star: f64,
    /// Per subproblem: best cost found while optimizing it, now and one visit earlier.
    pub group_best: Vec<(f64, f64)>,
    /// Evaluations spent in optimizer steps, per pool member.
    pub optimizer_fes: Vec<u64>,
    /// Global log10 improvement credited to each pool member.
    pub optimizer_gain: Vec<f64>,
}

impl RunTelemetry {
    pub fn new(max_fes: u64, c0_star: f64, subproblems: usize, pool_size: usize) -> Self {
        RunTelemetry {
            fes_used: 0,
            max_fes,
            c0_star,
            ct_star: c0_star,
            c_prev_star: c0_star,
            group_best: vec![(c0_star, c0_star); subproblems],
            optimizer_fes: vec![0; pool_size],
            optimizer_gain: vec![0.0; pool_size],
        }
    }

    /// Record one optimizer step on subproblem `k`. `step_best` is the best
    /// cost the step found; `new_best` the global best after write-back.
    pub fn record_step(&mut self, k: usize, l: usize, fes: u64, step_best: f64, new_best: f64) {
        let (current, _) = self.group_best[k];
        self.group_best[k] = (current.min(step_best), current);
        self.optimizer_fes[l] += fes;
        let gain = clamp_cost(self.ct_star).log10() - clamp_cost(new_best).log10();
        self.optimizer_gain[l] += gain.max(0.0);
        self.c_prev_star = self.ct_star;
        self.ct_star = self.ct_star.min(new_best);
    }
}

fn ratio_pow8(now: f64, before: f64) -> f64 {
    if before <= 0.0 {
        return 1.0;
    }
    (clamp_cost(now) / clamp_cost(before)).powi(8)
}

/// Evaluation progress, normalised best cost, global and group improvement,
/// then per-optimizer usage and effectiveness.
pub fn progress_features(t: &RunTelemetry, k: usize) -> Vec<f64> {
    let l = t.optimizer_fes.len();
    let mut out = Vec::with_capacity(4 + 2 * l);
    out.push(t.fes_used as f64 / t.max_fes.max(1) as f64);

    let (ct, c0) = (clamp_cost(t.ct_star), clamp_cost(t.c0_star));
    let delta = (1.5 - ct).max(1.5 - c0).max(0.0);
    out.push(((ct + delta).log10() / (c0 + delta).log10()).powi(2));
    out.push(ratio_pow8(t.ct_star, t.c_prev_star));
    let (gk, gk_prev) = t.group_best[k];
    out.push(ratio_pow8(gk, gk_prev));

    let total: u64 = t.optimizer_fes.iter().sum();
    out.extend(t.optimizer_fes.iter().map(|&f| if total == 0 { 0.0 } else { f as f64 / total as f64 }));
    let span = (c0.log10() - ct.log10()).max(0.1);
    out.extend(t.optimizer_gain.iter().map(|g| g / span));
    out
}

/// Problem, population and progress features concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(problem: [f64; PROBLEM_FEATURES], population: [f64; POPULATION_FEATURES], progress: Vec<f64>) -> Self {
        let mut v = Vec::with_capacity(PROBLEM_FEATURES + POPULATION_FEATURES + progress.len());
        v.extend(problem);
        v.extend(population);
        v.extend(progress);
        StateVector(v)
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        StateVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Pool size implied by the length.
    pub fn pool_size(&self) -> usize {
        self.0.len().saturating_sub(12) / 2
    }

    pub fn dimension(&self) -> f64 {
        self.0[0]
    }

    pub fn problem(&self) -> &[f64] {
        &self.0[..PROBLEM_FEATURES]
    }

    pub fn population(&self) -> &[f64] {
        &self.0[PROBLEM_FEATURES..PROBLEM_FEATURES + POPULATION_FEATURES]
    }

    pub fn progress(&self) -> &[f64] {
        &self.0[PROBLEM_FEATURES + POPULATION_FEATURES..]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomp::{DecompositionSource, DesignStructureMatrix};
    use crate::pool::OptimizerKind;
    use proptest::{prop_assert, prop_assume, proptest};
    use rand::SeedableRng;

    fn decomposition(dim: usize, groups: Vec<Vec<usize>>) -> DecompositionResult {
        DecompositionResult {
            dsm: DesignStructureMatrix::from_groups(dim, &groups),
            groups,
            source: DecompositionSource::GroundTruth,
        }
    }

    #[test]
    fn dimension_feature_values() {
        assert_eq!(dimension_feature(500), 1.0);
        assert!((dimension_feature(1000) - 1.319_507_910_772_894).abs() < 1e-12);
        assert!(dimension_feature(88) < 0.5 && dimension_feature(89) > 0.5);
    }

    #[test]
    fn problem_features_separable_and_overlap() {
        let singletons = decomposition(4, (0..4).map(|i| vec![i]).collect());
        assert_eq!(problem_features(0, &singletons).unwrap()[1..], [1.0, 0.0]);
        let disjoint = decomposition(6, vec![vec![0, 1, 2], vec![3, 4, 5]]);
        assert_eq!(problem_features(1, &disjoint).unwrap()[1..], [0.0, 0.0]);
        let overlapping = decomposition(5, vec![vec![0, 1, 2], vec![2, 3, 4]]);
        assert_eq!(problem_features(0, &overlapping).unwrap()[2], 0.2);
        assert!(problem_features(2, &overlapping).is_err());
    }

    #[test]
    fn identical_population_has_zero_dispersion() {
        let pos = vec![vec![1.0, 2.0]; 5];
        let f = population_features(&[1.0; 5], &pos, &[vec![1.0; 5]], NEUTRAL_EPSILON);
        assert_eq!(f.values, [0.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn two_individual_probe_example() {
        let pos = vec![vec![0.0], vec![1.0]];
        let f = population_features(&[10.0, 20.0], &pos, &[vec![5.0, 30.0]], NEUTRAL_EPSILON);
        assert_eq!(f.values[2], 0.0);
        assert_eq!(f.values[3], 0.5);
        assert_eq!(f.values[4], 0.5);
    }

    #[test]
    fn no_probe_samples_is_neutral() {
        let pos = vec![vec![0.0], vec![3.0]];
        let f = population_features(&[1.0, 2.0], &pos, &[], NEUTRAL_EPSILON);
        assert_eq!(f.values, [3.0, 0.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn single_individual_is_degenerate() {
        let f = population_features(&[1.0], &[vec![0.0]], &[vec![1.0]], NEUTRAL_EPSILON);
        assert!(f.degenerate);
        assert_eq!(f.values, [0.0; 5]);
    }

    #[test]
    fn top_set_dispersion() {
        // 20 individuals: the best two sit 1 apart
        let pos: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let costs: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let f = population_features(&costs, &pos, &[], NEUTRAL_EPSILON);
        assert!((f.values[0] - 7.0).abs() < 1e-12);
        assert!((f.values[1] - (1.0 - 7.0)).abs() < 1e-12);
    }

    #[test]
    fn progress_worked_example() {
        let mut t = RunTelemetry::new(1000, 1e10, 2, 4);
        t.ct_star = 1e5;
        t.c_prev_star = 1e5;
        let p = progress_features(&t, 0);
        assert_eq!(p.len(), 12);
        assert!((p[1] - 0.25).abs() < 1e-15);
        assert_eq!(p[2], 1.0);
        assert_eq!(&p[4..], &[0.0; 8]);
    }

    #[test]
    fn progress_usage_and_gain() {
        let mut t = RunTelemetry::new(1000, 1e4, 2, 4);
        t.fes_used = 300;
        t.record_step(0, 1, 100, 1e3, 1e3);
        t.record_step(1, 3, 200, 5e3, 1e3);
        t.record_step(0, 1, 100, 1e2, 1e2);
        let p = progress_features(&t, 0);
        assert_eq!(p[0], 0.3);
        assert!((p[2] - 0.1f64.powi(8)).abs() < 1e-20);
        assert!((p[3] - 0.1f64.powi(8)).abs() < 1e-20);
        assert_eq!(&p[4..8], &[0.0, 0.5, 0.0, 0.5]);
        assert!((p[9] - 1.0).abs() < 1e-12);
        assert_eq!(p[11], 0.0);
    }

    #[test]
    fn zero_previous_cost_gives_unit_ratio() {
        let mut t = RunTelemetry::new(10, 5.0, 1, 2);
        t.ct_star = 0.0;
        t.c_prev_star = 0.0;
        t.group_best[0] = (0.0, 0.0);
        let p = progress_features(&t, 0);
        assert_eq!(p[2], 1.0);
        assert_eq!(p[3], 1.0);
        assert!(p.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn solved_on_first_step_is_finite() {
        let mut t = RunTelemetry::new(100, 3e4, 1, 4);
        t.record_step(0, 0, 10, 0.0, 0.0);
        let p = progress_features(&t, 0);
        assert!(p.iter().all(|v| v.is_finite()), "{p:?}");
        assert!((p[8] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn probe_is_deterministic_and_side_effect_free() {
        let memory = ContextMemory::new(3);
        let pool = PoolConfig::default();
        let pos: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64; 4]).collect();
        let sphere = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let before = memory.to_blob();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            probe_population(&memory, &pool, 0, &pos, (-5.0, 5.0), 3, 1000, &mut rng, &mut |x| sphere(x))
        };
        let a = run(1);
        assert_eq!(a, run(1));
        assert_eq!(a.costs.len(), 3);
        assert_eq!(a.fes, 18);
        assert_eq!(memory.to_blob(), before);
    }

    #[test]
    fn probe_truncates_on_budget() {
        let memory = ContextMemory::new(3);
        let pool = PoolConfig {
            members: vec![OptimizerKind::SepCma],
            high_tier: 1,
        };
        let pos = vec![vec![0.0; 2]; 4];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = probe_population(&memory, &pool, 0, &pos, (-1.0, 1.0), 3, 9, &mut rng, &mut |_| 1.0);
        assert_eq!(out.costs.len(), 2);
        assert!(out.truncated);
        assert_eq!(out.fes, 8);
    }

    proptest! {
        #[test]
        fn progress_features_stay_bounded(
            c0 in 1e-3f64..1e12,
            shrink in proptest::collection::vec(0.0f64..1.0, 1..20),
            l in proptest::collection::vec(0usize..4, 20),
        ) {
            let mut t = RunTelemetry::new(10_000, c0, 3, 4);
            let mut c = c0;
            for (i, s) in shrink.iter().enumerate() {
                let next = c * s;
                t.fes_used += 50;
                t.record_step(i % 3, l[i], 50, next, next);
                c = next;
                let p = progress_features(&t, i % 3);
                prop_assert!(p.iter().all(|v| v.is_finite()));
                prop_assert!((0.0..=1.0).contains(&p[1]));
                prop_assert!((0.0..=1.0).contains(&p[2]) && (0.0..=1.0).contains(&p[3]));
                let share: f64 = p[4..8].iter().sum();
                prop_assert!((share - 1.0).abs() < 1e-12);
                let gain: f64 = p[8..].iter().sum();
                prop_assert!(gain <= 1.0 + 1e-9);
            }
        }

        #[test]
        fn population_ratios_in_unit_interval(
            costs in proptest::collection::vec(-10.0f64..10.0, 2..12),
            noise in proptest::collection::vec(-3.0f64..3.0, 36),
        ) {
            let n = costs.len();
            let pos: Vec<Vec<f64>> = costs.iter().map(|c| vec![*c, -c]).collect();
            let probe: Vec<Vec<f64>> = (0..3).map(|s| (0..n).map(|i| costs[i] + noise[s * 12 + i]).collect()).collect();
            let f = population_features(&costs, &pos, &probe, NEUTRAL_EPSILON);
            prop_assert!(f.values[0] >= 0.0);
            for v in &f.values[2..] {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn dimension_feature_monotone(a in 1usize..5000, b in 1usize..5000) {
            prop_assume!(a < b);
            prop_assert!(dimension_feature(a) < dimension_feature(b));
        }
    }
}
