//! Repeated runs under several selection modes and the tables built from them.

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::episode::{run_episode, EpisodeConfig, SelectionMode, Selector};
use super::stats::{delta_sum_log10, mark, mean, median, std_dev, Mark, SIGNIFICANCE};
use crate::agent::Agent;
use crate::assembly::ProblemInstance;
use crate::decomp::DecompositionResult;
use crate::error::{Error, Result};
use crate::pool::PoolConfig;

pub struct NamedProblem<'a> {
    pub name: String,
    pub instance: &'a ProblemInstance,
    pub decomposition: &'a DecompositionResult,
}

/// Outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub instance: String,
    pub mode: String,
    pub seed: u64,
    pub best_cost: f64,
    pub initial_cost: f64,
    pub fes: u64,
    pub ledger_ok: bool,
    /// Wall-clock time; not written to result tables so reruns stay byte-identical.
    #[serde(skip)]
    pub runtime_s: f64,
}

/// Every mode on every problem for every seed. Runs are independent and
/// execute in parallel, each on its own copy of the instance.
pub fn ablate(
    problems: &[NamedProblem],
    pool: &PoolConfig,
    agent: Option<&Agent>,
    modes: &[SelectionMode],
    seeds: &[u64],
    config: &EpisodeConfig,
) -> Result<Vec<RunRecord>> {
    for &mode in modes {
        Selector::new(mode, agent, pool)?;
    }
    let jobs: Vec<(usize, SelectionMode, u64)> = (0..problems.len())
        .flat_map(|p| modes.iter().flat_map(move |&m| seeds.iter().map(move |&s| (p, m, s))))
        .collect();
    jobs.par_iter()
        .map(|&(p, mode, seed)| {
            let problem = &problems[p];
            let instance = problem.instance.clone();
            let selector = Selector::new(mode, agent, pool)?;
            let start = Instant::now();
            let out = run_episode(&instance, problem.decomposition, pool, &selector, config, seed)?;
            Ok(RunRecord {
                instance: problem.name.clone(),
                mode: mode.to_string(),
                seed,
                best_cost: out.best_cost,
                initial_cost: out.initial_cost,
                fes: out.ledger.counted,
                ledger_ok: out.ledger.reconciles(),
                runtime_s: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn write_runs<W: std::io::Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs<R: std::io::Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Final costs grouped by instance, then mode, in first-seen order.
pub struct CostTable {
    pub instances: Vec<String>,
    pub modes: Vec<String>,
    pub costs: BTreeMap<(String, String), Vec<f64>>,
}

impl CostTable {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut instances = Vec::new();
        let mut modes = Vec::new();
        let mut costs: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for r in records {
            if !instances.contains(&r.instance) {
                instances.push(r.instance.clone());
            }
            if !modes.contains(&r.mode) {
                modes.push(r.mode.clone());
            }
            costs.entry((r.instance.clone(), r.mode.clone())).or_default().push(r.best_cost);
        }
        CostTable {
            instances,
            modes,
            costs,
        }
    }

    pub fn get(&self, instance: &str, mode: &str) -> &[f64] {
        self.costs
            .get(&(instance.to_string(), mode.to_string()))
            .map_or(&[], Vec::as_slice)
    }

    pub fn median(&self, instance: &str, mode: &str) -> f64 {
        median(self.get(instance, mode))
    }

    /// Per-instance mark of `reference` against `baseline`.
    pub fn marks(&self, reference: &str, baseline: &str) -> Vec<Mark> {
        self.instances
            .iter()
            .map(|i| mark(self.get(i, reference), self.get(i, baseline), SIGNIFICANCE))
            .collect()
    }

    /// Mean ± std per cell, marks against `reference`, then the win/tie/loss
    /// row and the summed log10 difference of instance means.
    pub fn write_summary<W: std::io::Write>(&self, out: W, reference: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["instance".to_string()];
        header.extend(self.modes.iter().cloned());
        w.write_record(&header)?;
        for inst in &self.instances {
            let mut row = vec![inst.clone()];
            for m in &self.modes {
                let c = self.get(inst, m);
                let mut cell = format!("{:.3e} ± {:.3e}", mean(c), std_dev(c));
                if m != reference {
                    cell.push(' ');
                    cell.push_str(mark(self.get(inst, reference), c, SIGNIFICANCE).symbol());
                }
                row.push(cell);
            }
            w.write_record(&row)?;
        }
        let mut tally = vec!["+/≈/-".to_string()];
        let mut delta = vec!["delta_sum_log10".to_string()];
        let ref_means: Vec<f64> = self.instances.iter().map(|i| mean(self.get(i, reference))).collect();
        for m in &self.modes {
            if m == reference {
                tally.push("N/A".into());
                delta.push("N/A".into());
                continue;
            }
            let marks = self.marks(reference, m);
            let count = |k: Mark| marks.iter().filter(|x| **x == k).count();
            tally.push(format!("{}/{}/{}", count(Mark::Better), count(Mark::Tie), count(Mark::Worse)));
            let base_means: Vec<f64> = self.instances.iter().map(|i| mean(self.get(i, m))).collect();
            delta.push(format!("{:.2}", delta_sum_log10(&ref_means, &base_means)));
        }
        w.write_record(&tally)?;
        w.write_record(&delta)?;
        w.flush()?;
        Ok(())
    }
}
