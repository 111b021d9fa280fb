//! The five subcommands.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use lhcc_core::agent::Agent;
use lhcc_core::assembly::{appendix_suite, export_instance, InstanceConfig, NamedConfig, ProblemInstance};
use lhcc_core::bench::BasicFunction;
use lhcc_core::features::state_len;
use lhcc_core::runner::{
    ablate, median, read_runs, run_episode, train, write_runs, write_trace, CostTable, IterationLog, NamedProblem,
    RunRecord, SelectionMode, Selector, TrainingProblem,
};
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::failure::Failure;
use crate::manifest::{ExperimentManifest, LoadedProblem};

pub enum InstanceSource {
    AppendixB,
    Custom {
        name: String,
        dims: Vec<usize>,
        functions: Vec<u8>,
        degree: u8,
    },
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Write instance documents with a `sha256sum`-style sidecar each.
pub fn gen(source: InstanceSource, seed: u64, scale: usize, out: &Path) -> Result<Vec<PathBuf>, Failure> {
    let configs = match source {
        InstanceSource::AppendixB => appendix_suite(seed, scale)?,
        InstanceSource::Custom {
            name,
            dims,
            functions,
            degree,
        } => {
            if scale == 0 {
                return Err(Failure::Usage("--scale must be positive".into()));
            }
            let functions = functions
                .iter()
                .map(|&id| BasicFunction::try_from(id))
                .collect::<lhcc_core::Result<Vec<_>>>()?;
            let functions = match functions.len() {
                1 => vec![functions[0]; dims.len()],
                _ => functions,
            };
            let dims = dims.iter().map(|d| (d / scale).max(1)).collect();
            vec![NamedConfig {
                name,
                config: InstanceConfig::new(dims, functions, degree, seed),
            }]
        }
    };
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for NamedConfig { name, config } in configs {
        let instance = ProblemInstance::build(config)?;
        let text = export_instance(&instance);
        let file = format!("{name}.json");
        let path = out.join(&file);
        write_file(&path, text.as_bytes())?;
        let digest: String = Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect();
        write_file(&out.join(format!("{file}.sha256")), format!("{digest}  {file}\n").as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

pub struct TrainOverrides {
    pub iterations: Option<usize>,
    pub learning_rate: Option<f64>,
    pub parallel_envs: Option<usize>,
}

pub fn train_agent(m: &mut ExperimentManifest, overrides: &TrainOverrides) -> Result<PathBuf, Failure> {
    if let Some(n) = overrides.iterations {
        m.train.iterations = n;
    }
    if let Some(lr) = overrides.learning_rate {
        m.train.learning_rate = lr;
    }
    if let Some(n) = overrides.parallel_envs {
        m.train.parallel_envs = n;
    }
    m.train.validate()?;
    let pool = m.pool_config()?;
    let loaded = m.load_problems()?;
    let problems: Vec<TrainingProblem> = loaded
        .iter()
        .map(|p| TrainingProblem {
            instance: &p.instance,
            decomposition: &p.decomposition,
        })
        .collect();
    let mut agent = Agent::new(state_len(pool.len()), pool.len(), pool.high_tier, m.train.seed)?;
    let logs = train(&problems, &pool, &mut agent, &m.train)?;

    fs::create_dir_all(&m.out)?;
    let ckpt = m.checkpoint_path();
    if let Some(dir) = ckpt.parent() {
        fs::create_dir_all(dir)?;
    }
    agent.save(&ckpt)?;
    write_train_log(create(&m.out.join("train_log.csv"))?, &logs)?;
    Ok(ckpt)
}

fn write_train_log<W: Write>(out: W, logs: &[IterationLog]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "iteration",
        "learning_rate",
        "updates",
        "policy_loss",
        "value_loss",
        "entropy",
        "mean_reward",
        "mean_log_gain",
        "events",
    ])?;
    for l in logs {
        w.write_record([
            l.iteration.to_string(),
            format!("{:e}", l.learning_rate),
            l.updates.to_string(),
            format!("{:e}", l.policy_loss),
            format!("{:e}", l.value_loss),
            format!("{:e}", l.entropy),
            format!("{:e}", l.mean_reward),
            format!("{:e}", l.mean_log_gain),
            l.events.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn load_agent(m: &ExperimentManifest, pool_len: usize) -> Result<Agent, Failure> {
    let path = m.checkpoint_path();
    if !path.is_file() {
        return Err(Failure::Missing(format!("checkpoint {} not found", path.display())));
    }
    Ok(Agent::load(&path, Some(pool_len))?)
}

#[derive(Serialize)]
struct Timing<'a> {
    instance: &'a str,
    mode: &'a str,
    seed: u64,
    runtime_s: f64,
}

#[derive(Serialize)]
struct Timings<'a> {
    started_unix_s: u64,
    runs: Vec<Timing<'a>>,
}

/// Wall-clock data lives apart from the result tables so those stay reproducible.
fn write_timings(path: &Path, started: SystemTime, records: &[RunRecord]) -> Result<(), Failure> {
    let timings = Timings {
        started_unix_s: started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        runs: records
            .iter()
            .map(|r| Timing {
                instance: &r.instance,
                mode: &r.mode,
                seed: r.seed,
                runtime_s: r.runtime_s,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&timings)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn trace_name(instance: &str, mode: SelectionMode, seed: u64) -> String {
    format!("{instance}__{}__s{seed}.csv", mode.to_string().replace(':', "-"))
}

/// One mode on every instance and seed; writes traces, runs and a summary table.
pub fn run(m: &ExperimentManifest, mode: SelectionMode) -> Result<Vec<RunRecord>, Failure> {
    let pool = m.pool_config()?;
    let agent = if mode.needs_agent() {
        Some(load_agent(m, pool.len())?)
    } else {
        None
    };
    let selector = Selector::new(mode, agent.as_ref(), &pool)?;
    let problems = m.load_problems()?;
    let started = SystemTime::now();

    let jobs: Vec<(&LoadedProblem, u64)> = problems
        .iter()
        .flat_map(|p| m.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<_> = jobs
        .par_iter()
        .map(|&(p, seed)| {
            let instance = p.instance.clone();
            let clock = Instant::now();
            let out = run_episode(&instance, &p.decomposition, &pool, &selector, &m.episode, seed)?;
            let record = RunRecord {
                instance: p.name.clone(),
                mode: mode.to_string(),
                seed,
                best_cost: out.best_cost,
                initial_cost: out.initial_cost,
                fes: out.ledger.counted,
                ledger_ok: out.ledger.reconciles(),
                runtime_s: clock.elapsed().as_secs_f64(),
            };
            Ok((record, out.trace))
        })
        .collect::<lhcc_core::Result<_>>()?;

    let traces = m.out.join("traces");
    fs::create_dir_all(&traces)?;
    let mut records = Vec::with_capacity(results.len());
    for (record, trace) in results {
        write_trace(create(&traces.join(trace_name(&record.instance, mode, record.seed)))?, &trace)?;
        records.push(record);
    }
    write_runs(create(&m.out.join("runs.csv"))?, &records)?;
    CostTable::from_records(&records).write_summary(create(&m.out.join("summary.csv"))?, &mode.to_string())?;
    write_timings(&m.out.join("timings.json"), started, &records)?;
    Ok(records)
}

/// Learned, random and every fixed choice; `greedy` adds the argmax policy.
pub fn ablation_modes(pool_len: usize, greedy: bool) -> Vec<SelectionMode> {
    let mut modes = vec![SelectionMode::Learned];
    if greedy {
        modes.push(SelectionMode::Greedy);
    }
    modes.push(SelectionMode::Random);
    modes.extend((0..pool_len).map(SelectionMode::Fixed));
    modes
}

pub fn ablation(m: &ExperimentManifest, modes: &[SelectionMode]) -> Result<Vec<RunRecord>, Failure> {
    let pool = m.pool_config()?;
    let agent = if modes.iter().any(|md| md.needs_agent()) {
        Some(load_agent(m, pool.len())?)
    } else {
        None
    };
    let loaded = m.load_problems()?;
    let problems: Vec<NamedProblem> = loaded
        .iter()
        .map(|p| NamedProblem {
            name: p.name.clone(),
            instance: &p.instance,
            decomposition: &p.decomposition,
        })
        .collect();
    let started = SystemTime::now();
    let records = ablate(&problems, &pool, agent.as_ref(), modes, &m.seeds, &m.episode)?;
    fs::create_dir_all(&m.out)?;
    write_runs(create(&m.out.join("runs.csv"))?, &records)?;
    let reference = modes.first().map(|md| md.to_string()).unwrap_or_default();
    CostTable::from_records(&records).write_summary(create(&m.out.join("ablation.csv"))?, &reference)?;
    write_timings(&m.out.join("timings.json"), started, &records)?;
    Ok(records)
}

/// Column label for each table: its file stem, widened by the parent
/// directory and then an index until labels are unique.
fn table_labels(tables: &[PathBuf]) -> Vec<String> {
    let stem = |p: &Path| p.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let mut labels: Vec<String> = tables.iter().map(|p| stem(p)).collect();
    let clash = |labels: &[String], i: usize| labels.iter().filter(|l| **l == labels[i]).count() > 1;
    let widened: Vec<String> = (0..tables.len())
        .map(|i| match (clash(&labels, i), tables[i].parent().and_then(Path::file_name)) {
            (true, Some(dir)) => format!("{}/{}", dir.to_string_lossy(), labels[i]),
            _ => labels[i].clone(),
        })
        .collect();
    labels = widened;
    for i in 0..labels.len() {
        if labels[..i].contains(&labels[i]) {
            labels[i] = format!("{}#{}", labels[i], i + 1);
        }
    }
    labels
}

/// Merge result tables into one comparison (first table is the reference)
/// and emit median convergence curves from any traces found beside them.
pub fn report(tables: &[PathBuf], out: &Path) -> Result<Vec<String>, Failure> {
    if tables.is_empty() {
        return Err(Failure::Usage("report needs at least one result table".into()));
    }
    let labels = table_labels(tables);
    let mut merged = Vec::new();
    for (path, label) in tables.iter().zip(&labels) {
        let file = File::open(path).map_err(|e| Failure::Missing(format!("{}: {e}", path.display())))?;
        let records = read_runs(file)?;
        let single_mode = records.iter().all(|r| r.mode == records[0].mode);
        for mut r in records {
            r.mode = match single_mode {
                true => label.clone(),
                false => format!("{label}:{}", r.mode),
            };
            merged.push(r);
        }
    }
    fs::create_dir_all(out)?;
    let table = CostTable::from_records(&merged);
    let reference = table.modes.first().cloned().unwrap_or_default();
    table.write_summary(create(&out.join("report.csv"))?, &reference)?;

    let curves = out.join("curves");
    for (path, label) in tables.iter().zip(&labels) {
        let traces = path.parent().unwrap_or(Path::new(".")).join("traces");
        if traces.is_dir() {
            fs::create_dir_all(&curves)?;
            write_curves(&traces, &curves, &label.replace('/', "_"))?;
        }
    }
    Ok(table.modes.clone())
}

/// Median best cost after each decision step, per instance and mode.
fn write_curves(traces: &Path, out: &Path, label: &str) -> Result<(), Failure> {
    let mut entries: Vec<PathBuf> = fs::read_dir(traces)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    let mut series: BTreeMap<(String, String), Vec<Vec<f64>>> = BTreeMap::new();
    for path in entries {
        let stem = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
        let parts: Vec<&str> = stem.split("__").collect();
        let [instance, mode, _seed] = parts[..] else { continue };
        let mut rd = csv::Reader::from_path(&path)?;
        let column = rd.headers()?.iter().position(|h| h == "best_cost");
        let Some(column) = column else { continue };
        let mut costs = Vec::new();
        for row in rd.records() {
            let row = row?;
            let cost: f64 = row[column]
                .parse()
                .map_err(|_| Failure::Runtime(format!("{}: bad best_cost", path.display())))?;
            costs.push(cost);
        }
        series.entry((instance.to_string(), mode.to_string())).or_default().push(costs);
    }
    for ((instance, mode), runs) in series {
        let steps = runs.iter().map(Vec::len).max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(create(&out.join(format!("{label}__{instance}__{mode}.csv")))?);
        w.write_record(["step", "cost"])?;
        for t in 0..steps {
            // Runs that stopped early keep their final cost.
            let at: Vec<f64> = runs.iter().filter_map(|r| r.get(t).or(r.last()).copied()).collect();
            w.write_record([(t + 1).to_string(), format!("{:e}", median(&at))])?;
        }
        w.flush()?;
    }
    Ok(())
}
