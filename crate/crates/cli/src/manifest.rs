//! Experiment manifests and the flags that override them.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use lhcc_core::assembly::{import_instance, ProblemInstance};
use lhcc_core::decomp::{differential_grouping_decompose, ground_truth_decompose, DecompositionResult, GroupingConfig};
use lhcc_core::pool::PoolConfig;
use lhcc_core::runner::{EpisodeConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

pub const MANIFEST_FORMAT: &str = "lhcc-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DecompositionMode {
    #[default]
    GroundTruth,
    Detected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub format: String,
    pub version: u32,
    pub id: String,
    pub instances: Vec<PathBuf>,
    #[serde(default)]
    pub decomposition: DecompositionMode,
    #[serde(default = "default_pool")]
    pub pool: String,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub episode: EpisodeConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_pool() -> String {
    PoolConfig::default().to_string()
}

fn default_seeds() -> Vec<u64> {
    vec![1]
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

impl Default for ExperimentManifest {
    fn default() -> Self {
        ExperimentManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            id: "experiment".into(),
            instances: Vec::new(),
            decomposition: DecompositionMode::default(),
            pool: default_pool(),
            checkpoint: None,
            episode: EpisodeConfig::default(),
            train: TrainConfig::default(),
            seeds: default_seeds(),
            out: default_out(),
        }
    }
}

/// Options shared by the experiment commands. Any flag given overrides the manifest.
#[derive(Debug, Clone, Default, Args)]
pub struct ExperimentArgs {
    /// Experiment manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Instance documents, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub instances: Vec<PathBuf>,
    #[arg(long, value_enum)]
    pub decomposition: Option<DecompositionMode>,
    /// Optimizer pool as `high,high|low,low`, e.g. `sep-cma,lm-ma|cma,rank-one`.
    #[arg(long)]
    pub pool: Option<String>,
    /// Agent checkpoint; defaults to `<out>/agent.ckpt`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// First seed; runs use consecutive seeds from here.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Number of seeds.
    #[arg(long)]
    pub runs: Option<usize>,
    /// Evaluation budget per episode.
    #[arg(long)]
    pub max_fes: Option<u64>,
    /// Evaluation budget per decision step.
    #[arg(long)]
    pub step_fes: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ExperimentManifest {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        let m: ExperimentManifest =
            serde_json::from_str(text).map_err(|e| Failure::Usage(format!("manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT {
            return Err(Failure::Usage(format!("manifest: expected format `{MANIFEST_FORMAT}`")));
        }
        if m.version > MANIFEST_VERSION {
            return Err(Failure::Usage(format!(
                "manifest version {} is newer than supported version {MANIFEST_VERSION}",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Missing(format!("{}: {e}", path.display())))?;
        let mut m = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in &mut m.instances {
            *p = base.join(&*p);
        }
        m.checkpoint = m.checkpoint.map(|c| base.join(c));
        m.out = base.join(&m.out);
        Ok(m)
    }

    /// The manifest named by `args` (or defaults) with every given flag applied.
    pub fn resolve(args: &ExperimentArgs) -> Result<Self, Failure> {
        let mut m = match &args.manifest {
            Some(path) => Self::load(path)?,
            None => Self::default(),
        };
        if !args.instances.is_empty() {
            m.instances = args.instances.clone();
        }
        if let Some(d) = args.decomposition {
            m.decomposition = d;
        }
        if let Some(p) = &args.pool {
            m.pool = p.clone();
        }
        if let Some(c) = &args.checkpoint {
            m.checkpoint = Some(c.clone());
        }
        if args.seed.is_some() || args.runs.is_some() {
            let first = args.seed.unwrap_or(1);
            m.seeds = (0..args.runs.unwrap_or(1) as u64).map(|i| first + i).collect();
            m.train.seed = first;
        }
        if let Some(n) = args.max_fes {
            m.episode.max_fes = n;
            m.train.episode.max_fes = n;
        }
        if let Some(n) = args.step_fes {
            m.episode.step_fes = n;
            m.train.episode.step_fes = n;
        }
        if let Some(o) = &args.out {
            m.out = o.clone();
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), Failure> {
        if self.instances.is_empty() {
            return Err(Failure::Usage("no instance documents given".into()));
        }
        if self.seeds.is_empty() {
            return Err(Failure::Usage("the seed list is empty".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(Failure::Usage("seeds must be distinct".into()));
        }
        for p in &self.instances {
            if !p.is_file() {
                return Err(Failure::Missing(format!("instance document {} not found", p.display())));
            }
        }
        self.pool_config()?;
        self.episode.validate()?;
        self.train.validate()?;
        Ok(())
    }

    pub fn pool_config(&self) -> Result<PoolConfig, Failure> {
        Ok(PoolConfig::parse(&self.pool)?)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.checkpoint.clone().unwrap_or_else(|| self.out.join("agent.ckpt"))
    }

    /// Every instance with its name (the file stem) and decomposition.
    pub fn load_problems(&self) -> Result<Vec<LoadedProblem>, Failure> {
        self.instances
            .iter()
            .map(|path| {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Failure::Missing(format!("{}: {e}", path.display())))?;
                let instance = import_instance(&text)?;
                let decomposition = match self.decomposition {
                    DecompositionMode::GroundTruth => ground_truth_decompose(&instance),
                    DecompositionMode::Detected => differential_grouping_decompose(&instance, &GroupingConfig::default())?,
                };
                let name = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "instance".into());
                Ok(LoadedProblem {
                    name,
                    instance,
                    decomposition,
                })
            })
            .collect()
    }
}

pub struct LoadedProblem {
    pub name: String,
    pub instance: ProblemInstance,
    pub decomposition: DecompositionResult,
}
