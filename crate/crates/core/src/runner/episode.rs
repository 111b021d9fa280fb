//! One optimisation run: initial sampling, then round-robin decisions over
//! the subproblems until the budget runs out or the target is reached.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::reward::compute_reward;
use crate::agent::{Agent, MASK_THRESHOLD};
use crate::assembly::{mix_seed, ProblemInstance};
use crate::decomp::DecompositionResult;
use crate::error::{Error, Result};
use crate::features::{
    population_features, probe_population, problem_features, progress_features, state_len, RunTelemetry, StateVector,
    NEUTRAL_EPSILON, PROBE_SAMPLES,
};
use crate::pool::{population_size, ContextMemory, OptimizerHandle, PoolConfig, PopulationSnapshot};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub max_fes: u64,
    pub step_fes: u64,
    pub target_cost: f64,
    pub gamma: f64,
    /// Uniform samples used to fix the reference cost c*_0.
    pub init_samples: u64,
    pub probe_samples: usize,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        EpisodeConfig {
            max_fes: 100_000,
            step_fes: 2500,
            target_cost: 1e-20,
            gamma: 0.99,
            init_samples: 100,
            probe_samples: PROBE_SAMPLES,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.step_fes == 0 || self.step_fes > self.max_fes {
            return Err(Error::config("step budget must be positive and at most the total budget"));
        }
        if self.init_samples == 0 || self.init_samples >= self.max_fes {
            return Err(Error::config("initial sampling must leave budget for optimisation"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// How the optimizer is chosen at each decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMode {
    /// Sample from the trained policy.
    Learned,
    /// Most probable action of the trained policy.
    Greedy,
    /// Uniform over the unmasked actions.
    Random,
    /// Always optimizer `l` (0-based), or the first high-tier member where it is masked.
    Fixed(usize),
}

impl SelectionMode {
    pub fn needs_agent(self) -> bool {
        matches!(self, SelectionMode::Learned | SelectionMode::Greedy)
    }
}

impl fmt::Display for SelectionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SelectionMode::Learned => f.write_str("learned"),
            SelectionMode::Greedy => f.write_str("greedy"),
            SelectionMode::Random => f.write_str("random"),
            SelectionMode::Fixed(l) => write!(f, "fixed:{}", l + 1),
        }
    }
}

impl FromStr for SelectionMode {
    type Err = Error;

    /// `learned`, `greedy`, `random` or `fixed:<l>` with `l` counted from 1.
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "learned" => Ok(SelectionMode::Learned),
            "greedy" => Ok(SelectionMode::Greedy),
            "random" => Ok(SelectionMode::Random),
            other => {
                let l = other
                    .strip_prefix("fixed:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::config(format!("unknown mode `{other}`")))?;
                Ok(SelectionMode::Fixed(l - 1))
            }
        }
    }
}

/// Evaluation counts by purpose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeLedger {
    pub init: u64,
    pub steps: u64,
    pub probes: u64,
    /// Evaluations the instance counted during the run.
    pub counted: u64,
}

impl FeLedger {
    pub fn total(&self) -> u64 {
        self.init + self.steps + self.probes
    }

    pub fn reconciles(&self) -> bool {
        self.total() == self.counted
    }
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: usize,
    pub k: usize,
    pub action: usize,
    pub reward: f64,
    pub fes: u64,
    pub best_cost: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// A run in progress, advanced one decision at a time.
pub struct Environment<'a> {
    instance: &'a ProblemInstance,
    groups: &'a [Vec<usize>],
    problem: Vec<[f64; 3]>,
    pool: PoolConfig,
    config: EpisodeConfig,
    memory: ContextMemory,
    telemetry: RunTelemetry,
    best_x: Vec<f64>,
    best_cost: f64,
    probe_rng: ChaCha8Rng,
    fe_origin: u64,
    ledger: FeLedger,
    trace: Vec<TraceRecord>,
    k: usize,
    pending: Option<StateVector>,
    done: bool,
}

impl<'a> Environment<'a> {
    /// Draw the initial uniform sample and set up an empty context memory.
    pub fn new(
        instance: &'a ProblemInstance,
        decomposition: &'a DecompositionResult,
        pool: PoolConfig,
        config: EpisodeConfig,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        pool.validate()?;
        if decomposition.groups.is_empty() {
            return Err(Error::config("the decomposition has no groups"));
        }
        if decomposition.dim() != instance.dim() {
            return Err(Error::config("the decomposition does not match the instance dimension"));
        }
        let problem = (0..decomposition.groups.len())
            .map(|k| problem_features(k, decomposition))
            .collect::<Result<Vec<_>>>()?;
        let fe_origin = instance.fe_count();
        let (lo, hi) = instance.bounds();
        let mut init_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0));
        let mut best_x = Vec::new();
        let mut best_cost = f64::INFINITY;
        for _ in 0..config.init_samples {
            let x: Vec<f64> = (0..instance.dim()).map(|_| init_rng.random_range(lo..=hi)).collect();
            let c = instance.evaluate(&x)?;
            if c < best_cost || best_x.is_empty() {
                best_cost = c;
                best_x = x;
            }
        }
        let telemetry = RunTelemetry::new(config.max_fes, best_cost, decomposition.groups.len(), pool.len());
        let done = best_cost < config.target_cost;
        Ok(Environment {
            instance,
            groups: &decomposition.groups,
            problem,
            memory: ContextMemory::new(mix_seed(seed, 3)),
            telemetry,
            best_x,
            best_cost,
            probe_rng: ChaCha8Rng::seed_from_u64(mix_seed(seed, 1)),
            fe_origin,
            ledger: FeLedger {
                init: config.init_samples,
                ..Default::default()
            },
            trace: Vec::new(),
            k: 0,
            pending: None,
            done,
            pool,
            config,
        })
    }

    pub fn used(&self) -> u64 {
        self.instance.fe_count() - self.fe_origin
    }

    pub fn remaining(&self) -> u64 {
        self.config.max_fes.saturating_sub(self.used())
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn best_cost(&self) -> f64 {
        self.best_cost
    }

    pub fn best_solution(&self) -> &[f64] {
        &self.best_x
    }

    pub fn initial_cost(&self) -> f64 {
        self.telemetry.c0_star
    }

    pub fn telemetry(&self) -> &RunTelemetry {
        &self.telemetry
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    pub fn memory(&self) -> &ContextMemory {
        &self.memory
    }

    pub fn pool(&self) -> &PoolConfig {
        &self.pool
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn current_subproblem(&self) -> usize {
        self.k
    }

    pub fn ledger(&self) -> FeLedger {
        FeLedger {
            counted: self.used(),
            ..self.ledger
        }
    }

    /// Actions allowed in the state about to be acted on.
    pub fn allowed_actions(&self, state: &StateVector) -> Vec<usize> {
        let restricted = state.dimension() > MASK_THRESHOLD;
        (0..self.pool.len())
            .filter(|&l| !restricted || l < self.pool.high_tier)
            .collect()
    }

    fn affordable(&self) -> bool {
        self.remaining() >= population_size(self.groups[self.k].len()) as u64
    }

    /// The state of the next decision, or `None` once the run is over.
    pub fn observe(&mut self) -> Result<Option<StateVector>> {
        if self.done {
            return Ok(None);
        }
        if let Some(s) = &self.pending {
            return Ok(Some(s.clone()));
        }
        if !self.affordable() {
            self.done = true;
            return Ok(None);
        }
        let k = self.k;
        let group = &self.groups[k];
        let reserve = population_size(group.len()) as u64;
        let population = match self.memory.snapshot(k) {
            Some(snap) if snap.positions.len() >= 2 => {
                let shift = self.best_cost - snap.reference_cost;
                let costs: Vec<f64> = snap.costs.iter().map(|c| c + shift).collect();
                let positions = snap.positions.clone();
                let mut sub = self.instance.subspace(&self.best_x, group)?;
                let probe = probe_population(
                    &self.memory,
                    &self.pool,
                    k,
                    &positions,
                    self.instance.bounds(),
                    self.config.probe_samples,
                    self.remaining() - reserve,
                    &mut self.probe_rng,
                    &mut |x| sub.evaluate(x),
                );
                self.ledger.probes += probe.fes;
                // Distances are taken in units of the search-box diagonal.
                let (lo, hi) = self.instance.bounds();
                let scale = (hi - lo) * (group.len() as f64).sqrt();
                let unit: Vec<Vec<f64>> = positions.iter().map(|x| x.iter().map(|v| (v - lo) / scale).collect()).collect();
                population_features(&costs, &unit, &probe.costs, NEUTRAL_EPSILON).values
            }
            _ => [0.0; 5],
        };
        self.telemetry.fes_used = self.used();
        let state = StateVector::new(self.problem[k], population, progress_features(&self.telemetry, k));
        debug_assert_eq!(state.len(), state_len(self.pool.len()));
        self.pending = Some(state.clone());
        Ok(Some(state))
    }

    fn open_handle(&mut self, k: usize, l: usize) -> Result<OptimizerHandle> {
        let dims = self.groups[k].len();
        let kind = self.pool.kind(l);
        let bounds = self.instance.bounds();
        match self.memory.create_or_restore(k, l, kind, dims, bounds) {
            Err(Error::ContextInvalidated { .. }) => self.memory.create_or_restore(k, l, kind, dims, bounds),
            other => other,
        }
    }

    /// Run optimizer `action` on the current subproblem for one step.
    pub fn act(&mut self, action: usize) -> Result<StepOutcome> {
        let state = self
            .pending
            .take()
            .ok_or_else(|| Error::contract("act called without a pending observation"))?;
        if !self.allowed_actions(&state).contains(&action) {
            return Err(Error::contract(format!("action {action} is not allowed in this state")));
        }
        let k = self.k;
        let group = &self.groups[k];
        let budget = self.config.step_fes.min(self.remaining());
        let mut handle = self.open_handle(k, action)?;
        let report = {
            let mut sub = self.instance.subspace(&self.best_x, group)?;
            handle.step(&mut |x| sub.evaluate(x), budget)?
        };
        self.memory.checkpoint(handle);
        let c_prev = self.best_cost;
        if report.best_cost < self.best_cost {
            for (&v, &value) in group.iter().zip(&report.best_solution) {
                self.best_x[v] = value;
            }
            self.best_cost = report.best_cost;
        }
        self.memory.set_snapshot(
            k,
            PopulationSnapshot {
                positions: report.positions,
                costs: report.costs,
                reference_cost: self.best_cost,
            },
        );
        self.ledger.steps += report.fes_used;
        self.telemetry
            .record_step(k, action, report.fes_used, report.best_cost, self.best_cost);
        self.telemetry.fes_used = self.used();
        let reward = compute_reward(c_prev, self.best_cost, self.telemetry.c0_star);
        self.trace.push(TraceRecord {
            t: self.trace.len(),
            k,
            action,
            reward,
            fes: self.used(),
            best_cost: self.best_cost,
            features: state.as_slice().to_vec(),
        });
        self.k = (k + 1) % self.groups.len();
        self.done = self.best_cost < self.config.target_cost || !self.affordable();
        Ok(StepOutcome {
            reward,
            done: self.done,
        })
    }
}

/// Chooses actions for a run.
pub struct Selector<'a> {
    pub mode: SelectionMode,
    pub agent: Option<&'a Agent>,
}

impl<'a> Selector<'a> {
    pub fn new(mode: SelectionMode, agent: Option<&'a Agent>, pool: &PoolConfig) -> Result<Self> {
        if mode.needs_agent() && agent.is_none() {
            return Err(Error::config(format!("mode {mode} needs a trained agent")));
        }
        if let SelectionMode::Fixed(l) = mode {
            if l >= pool.len() {
                return Err(Error::config(format!("fixed optimizer {} is outside the pool of {}", l + 1, pool.len())));
            }
        }
        if let Some(a) = agent {
            if a.pool_size() != pool.len() {
                return Err(Error::config("agent and pool sizes differ"));
            }
        }
        Ok(Selector { mode, agent })
    }

    /// Returns the action plus its log-probability and value estimate when a
    /// policy is involved.
    pub fn choose(&self, state: &StateVector, allowed: &[usize], rng: &mut ChaCha8Rng) -> Result<(usize, f64, f64)> {
        match self.mode {
            SelectionMode::Learned => self.agent.expect("checked").sample_action(state, rng),
            SelectionMode::Greedy => self.agent.expect("checked").greedy_action(state),
            SelectionMode::Random => {
                let pick = allowed[rng.random_range(0..allowed.len())];
                Ok((pick, -(allowed.len() as f64).ln(), 0.0))
            }
            SelectionMode::Fixed(l) => Ok((if allowed.contains(&l) { l } else { allowed[0] }, 0.0, 0.0)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub best_solution: Vec<f64>,
    pub best_cost: f64,
    pub initial_cost: f64,
    pub trace: Vec<TraceRecord>,
    pub telemetry: RunTelemetry,
    pub ledger: FeLedger,
}

/// Run one complete episode with the given selection mode.
pub fn run_episode(
    instance: &ProblemInstance,
    decomposition: &DecompositionResult,
    pool: &PoolConfig,
    selector: &Selector,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeResult> {
    let mut env = Environment::new(instance, decomposition, pool.clone(), config.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 2));
    while let Some(state) = env.observe()? {
        let allowed = env.allowed_actions(&state);
        let (action, _, _) = selector.choose(&state, &allowed, &mut rng)?;
        env.act(action)?;
    }
    Ok(EpisodeResult {
        best_solution: env.best_solution().to_vec(),
        best_cost: env.best_cost(),
        initial_cost: env.initial_cost(),
        trace: env.trace.clone(),
        telemetry: env.telemetry.clone(),
        ledger: env.ledger(),
    })
}

/// Write a trace as delimited text: t, k, action, reward, fes, best cost, features.
pub fn write_trace<W: std::io::Write>(out: W, trace: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = trace.first().map_or(0, |r| r.features.len());
    let mut header: Vec<String> = ["t", "k", "action", "reward", "fes", "best_cost"].map(String::from).to_vec();
    header.extend((0..width).map(|i| format!("s{i}")));
    w.write_record(&header)?;
    for r in trace {
        let mut row = vec![
            r.t.to_string(),
            r.k.to_string(),
            r.action.to_string(),
            format!("{:e}", r.reward),
            r.fes.to_string(),
            format!("{:e}", r.best_cost),
        ];
        row.extend(r.features.iter().map(|f| format!("{f:e}")));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
