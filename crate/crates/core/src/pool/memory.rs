//! Optimizer contexts, the per-subproblem common record and the context
//! memory that enables warm starts after optimizer switches.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::models::Model;
use super::strategy::{reflect_into, run_generation, EsCore, RngState, StrategyParams};
use crate::assembly::mix_seed;
use crate::error::{Error, Result};

pub const CONTEXT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Diagonal-covariance CMA-ES.
    SepCma,
    /// Limited-memory matrix adaptation ES.
    LmMa,
    /// Full-covariance CMA-ES.
    Cma,
    /// ES with a dense Cholesky-style factor and rank-one updates.
    RankOne,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 4] = [Self::SepCma, Self::LmMa, Self::Cma, Self::RankOne];

    pub fn name(self) -> &'static str {
        match self {
            Self::SepCma => "sep-cma",
            Self::LmMa => "lm-ma",
            Self::Cma => "cma",
            Self::RankOne => "rank-one",
        }
    }

    fn cold_model(self, n: usize) -> Model {
        match self {
            Self::SepCma => Model::separable(n),
            Self::LmMa => Model::limited_memory(n),
            Self::Cma => Model::full(n),
            Self::RankOne => Model::rank_one(n),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::config(format!("unknown optimizer `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    High,
    Low,
}

/// The candidate pool; members `0..high_tier` form the high-dimensional tier.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub members: Vec<OptimizerKind>,
    pub high_tier: usize,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            members: OptimizerKind::ALL.to_vec(),
            high_tier: 2,
        }
    }
}

impl PoolConfig {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn tier(&self, l: usize) -> Tier {
        if l < self.high_tier {
            Tier::High
        } else {
            Tier::Low
        }
    }

    pub fn kind(&self, l: usize) -> OptimizerKind {
        self.members[l]
    }

    pub fn validate(&self) -> Result<()> {
        if self.high_tier == 0 || self.high_tier > self.members.len() {
            return Err(Error::config("the high tier must hold between 1 and L optimizers"));
        }
        Ok(())
    }

    /// `high,high|low,low`, e.g. `sep-cma,lm-ma|cma,rank-one`.
    pub fn parse(spec: &str) -> Result<Self> {
        let (high, low) = spec.split_once('|').unwrap_or((spec, ""));
        let parse_list = |s: &str| -> Result<Vec<OptimizerKind>> {
            s.split(',').filter(|p| !p.trim().is_empty()).map(str::parse).collect()
        };
        let mut members = parse_list(high)?;
        let high_tier = members.len();
        members.extend(parse_list(low)?);
        let pool = PoolConfig { members, high_tier };
        pool.validate()?;
        Ok(pool)
    }
}

impl fmt::Display for PoolConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.members.iter().map(|k| k.name()).collect();
        write!(f, "{}|{}", names[..self.high_tier].join(","), names[self.high_tier..].join(","))
    }
}

/// Complete, versioned state of one optimizer on one subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerContext {
    pub version: u32,
    pub optimizer: OptimizerKind,
    pub core: EsCore,
    pub model: Model,
}

impl OptimizerContext {
    pub fn cold(kind: OptimizerKind, mean: Vec<f64>, sigma: f64, seed: u64) -> Self {
        let n = mean.len();
        OptimizerContext {
            version: CONTEXT_VERSION,
            optimizer: kind,
            core: EsCore::new(mean, sigma, seed),
            model: kind.cold_model(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.core.dim()
    }

    pub fn population_size(&self) -> usize {
        super::strategy::population_size(self.dim())
    }

    /// Number of reals held by the context.
    pub fn state_len(&self) -> usize {
        4 * self.dim() + self.model.state_len()
    }

    pub fn to_blob(&self) -> String {
        serde_json::to_string(self).expect("context serializes")
    }

    pub fn from_blob(blob: &str) -> Result<Self> {
        let ctx: OptimizerContext = serde_json::from_str(blob).map_err(|e| Error::Parse {
            line: e.line(),
            field: "context".into(),
            message: e.to_string(),
        })?;
        if ctx.version > CONTEXT_VERSION {
            return Err(Error::Parse {
                line: 1,
                field: "version".into(),
                message: format!("context version {} is newer than {CONTEXT_VERSION}", ctx.version),
            });
        }
        Ok(ctx)
    }

    /// Replace the generator, e.g. to decorrelate a throwaway clone.
    pub fn reseed(&mut self, seed: u64) {
        self.core.rng = RngState::from_seed(seed);
    }

    /// Perturb each point with one draw of this optimizer's mutation distribution.
    pub fn perturb(&mut self, points: &[Vec<f64>], bounds: (f64, f64)) -> Vec<Vec<f64>> {
        let params = StrategyParams::new(self.dim());
        let mut rng = self.core.rng.restore();
        let out = points
            .iter()
            .map(|p| {
                let z: Vec<f64> = (0..p.len()).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                let y = self.model.transform(&z, &params);
                let mut x: Vec<f64> = p.iter().zip(&y).map(|(a, b)| a + self.core.sigma * b).collect();
                reflect_into(&mut x, bounds.0, bounds.1);
                x
            })
            .collect();
        self.core.rng = RngState::capture(&rng);
        out
    }
}

/// Shared per-subproblem record: best solution, population mean and step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommonContext {
    pub best_solution: Vec<f64>,
    pub best_cost: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

/// Last population an optimizer left on a subproblem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSnapshot {
    pub positions: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    /// Global best cost when the snapshot was taken.
    pub reference_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub best_solution: Vec<f64>,
    pub best_cost: f64,
    pub fes_used: u64,
    pub generations: u64,
    /// Final generation, best first.
    pub positions: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
}

/// A live optimizer taken out of the memory for one step.
#[derive(Debug, Clone)]
pub struct OptimizerHandle {
    pub subproblem: usize,
    pub optimizer: usize,
    pub context: OptimizerContext,
    bounds: (f64, f64),
    last: Option<(Vec<f64>, f64)>,
}

impl OptimizerHandle {
    pub fn population_size(&self) -> usize {
        self.context.population_size()
    }

    /// Run whole generations while the next one still fits in `fe_budget`.
    pub fn step(&mut self, objective: &mut dyn FnMut(&[f64]) -> f64, fe_budget: u64) -> Result<StepReport> {
        let params = StrategyParams::new(self.context.dim());
        let lambda = params.lambda as u64;
        if fe_budget < lambda {
            return Err(Error::contract(format!(
                "step budget {fe_budget} is below one generation of {lambda}"
            )));
        }
        let mut used = 0;
        let mut generations = 0;
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut last = None;
        while used + lambda <= fe_budget {
            let gen = run_generation(
                &mut self.context.core,
                &mut self.context.model,
                &params,
                self.bounds,
                objective,
            );
            used += lambda;
            generations += 1;
            if best.as_ref().is_none_or(|(_, c)| gen.costs[0] < *c) {
                best = Some((gen.positions[0].clone(), gen.costs[0]));
            }
            last = Some(gen);
        }
        let (best_solution, best_cost) = best.expect("at least one generation");
        let gen = last.expect("at least one generation");
        self.last = Some((best_solution.clone(), best_cost));
        Ok(StepReport {
            best_solution,
            best_cost,
            fes_used: used,
            generations,
            positions: gen.positions,
            costs: gen.costs,
        })
    }
}

/// Context memory: one context per (subproblem, optimizer) plus the common
/// record and latest population of each subproblem.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ContextMemory {
    seed: u64,
    #[serde(with = "pair_keyed")]
    contexts: BTreeMap<(usize, usize), OptimizerContext>,
    common: BTreeMap<usize, CommonContext>,
    snapshots: BTreeMap<usize, PopulationSnapshot>,
    events: Vec<String>,
}

mod pair_keyed {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serializer};

    use super::OptimizerContext;

    type Map = BTreeMap<(usize, usize), OptimizerContext>;

    pub fn serialize<S: Serializer>(map: &Map, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(map.iter().map(|((k, l), c)| (k, l, c)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Map, D::Error> {
        let entries = Vec::<(usize, usize, OptimizerContext)>::deserialize(d)?;
        Ok(entries.into_iter().map(|(k, l, c)| ((k, l), c)).collect())
    }
}

/// Initial step size as a fraction of the box width.
pub const INITIAL_SIGMA_FRACTION: f64 = 0.3;

impl ContextMemory {
    pub fn new(seed: u64) -> Self {
        ContextMemory {
            seed,
            ..Default::default()
        }
    }

    pub fn context(&self, k: usize, l: usize) -> Option<&OptimizerContext> {
        self.contexts.get(&(k, l))
    }

    pub fn common(&self, k: usize) -> Option<&CommonContext> {
        self.common.get(&k)
    }

    pub fn snapshot(&self, k: usize) -> Option<&PopulationSnapshot> {
        self.snapshots.get(&k)
    }

    pub fn set_snapshot(&mut self, k: usize, snapshot: PopulationSnapshot) {
        self.snapshots.insert(k, snapshot);
    }

    /// Log of discarded contexts.
    pub fn events(&self) -> &[String] {
        &self.events
    }

    pub fn num_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn to_blob(&self) -> String {
        serde_json::to_string(self).expect("memory serializes")
    }

    pub fn from_blob(blob: &str) -> Result<Self> {
        serde_json::from_str(blob).map_err(|e| Error::Parse {
            line: e.line(),
            field: "memory".into(),
            message: e.to_string(),
        })
    }

    fn cold_context(&self, k: usize, l: usize, kind: OptimizerKind, dims: usize, bounds: (f64, f64)) -> OptimizerContext {
        let (lo, hi) = bounds;
        let seed = mix_seed(self.seed, ((k as u64) << 16) | l as u64);
        let mut ctx = OptimizerContext::cold(kind, vec![0.5 * (lo + hi); dims], INITIAL_SIGMA_FRACTION * (hi - lo), seed);
        if let Some(common) = self.common.get(&k).filter(|c| c.mean.len() == dims) {
            ctx.core.mean = common.mean.clone();
            ctx.core.sigma = common.sigma;
            ctx.core.pending_elite = Some(common.best_solution.clone());
        }
        ctx
    }

    /// Restore `(k, l)` exactly, or cold-start it from the common record.
    ///
    /// A stored context of the wrong dimension is discarded and reported as
    /// an error; calling again then yields a cold start.
    pub fn create_or_restore(
        &mut self,
        k: usize,
        l: usize,
        kind: OptimizerKind,
        dims: usize,
        bounds: (f64, f64),
    ) -> Result<OptimizerHandle> {
        if let Some(ctx) = self.contexts.get(&(k, l)) {
            if ctx.dim() != dims || ctx.optimizer != kind {
                let reason = format!("stored {} context has dimension {}, expected {kind} with {dims}", ctx.optimizer, ctx.dim());
                self.contexts.remove(&(k, l));
                self.events.push(format!("subproblem {k}, optimizer {l}: {reason}"));
                return Err(Error::ContextInvalidated {
                    subproblem: k,
                    optimizer: l,
                    reason,
                });
            }
            return Ok(OptimizerHandle {
                subproblem: k,
                optimizer: l,
                context: ctx.clone(),
                bounds,
                last: None,
            });
        }
        Ok(OptimizerHandle {
            subproblem: k,
            optimizer: l,
            context: self.cold_context(k, l, kind, dims, bounds),
            bounds,
            last: None,
        })
    }

    /// A throwaway copy of `(k, l)` (stored or cold) reseeded from `seed`.
    pub fn probe_context(&self, k: usize, l: usize, kind: OptimizerKind, dims: usize, bounds: (f64, f64), seed: u64) -> OptimizerContext {
        let mut ctx = match self.contexts.get(&(k, l)) {
            Some(ctx) if ctx.dim() == dims && ctx.optimizer == kind => ctx.clone(),
            _ => self.cold_context(k, l, kind, dims, bounds),
        };
        ctx.reseed(seed);
        ctx
    }

    /// Store the handle's context and refresh the common record.
    pub fn checkpoint(&mut self, handle: OptimizerHandle) {
        let k = handle.subproblem;
        let ctx = handle.context;
        let entry = self.common.entry(k).or_insert_with(|| CommonContext {
            best_solution: ctx.core.mean.clone(),
            best_cost: f64::INFINITY,
            mean: ctx.core.mean.clone(),
            sigma: ctx.core.sigma,
        });
        if let Some((x, c)) = handle.last {
            if c < entry.best_cost {
                entry.best_solution = x;
                entry.best_cost = c;
            }
        }
        entry.mean = ctx.core.mean.clone();
        entry.sigma = ctx.core.sigma;
        self.contexts.insert((k, handle.optimizer), ctx);
    }
}
