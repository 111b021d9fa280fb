//! The optimizer pool and the context memory used for warm starts.

mod memory;
mod models;
mod strategy;

pub use memory::{
    CommonContext, ContextMemory, OptimizerContext, OptimizerHandle, OptimizerKind, PoolConfig, PopulationSnapshot,
    StepReport, Tier, CONTEXT_VERSION, INITIAL_SIGMA_FRACTION,
};
pub use models::Model;
pub use strategy::{population_size, reflect_into, run_generation, EsCore, Generation, RngState, StrategyParams};
