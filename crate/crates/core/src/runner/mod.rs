//! Episodes, training, ablation and result statistics.

mod ablate;
mod episode;
mod reward;
mod stats;
mod train;

pub use ablate::{ablate, read_runs, write_runs, CostTable, NamedProblem, RunRecord};
pub use episode::{
    run_episode, write_trace, Environment, EpisodeConfig, EpisodeResult, FeLedger, SelectionMode, Selector,
    StepOutcome, TraceRecord,
};
pub use reward::{compute_reward, reward_from_gain};
pub use stats::{delta_sum_log10, mark, mean, median, rank_sum, std_dev, Mark, RankSum, SIGNIFICANCE};
pub use train::{train, Adam, IterationLog, TrainConfig, TrainingProblem};
