//! Composite instance assembly, documents and the named suite.

mod config;
mod document;
mod instance;
mod presets;

pub use config::{overlap_ratio, InstanceConfig, WeightMode, DEFAULT_BOUNDS};
pub use document::{export_instance, import_instance, DOCUMENT_FORMAT, DOCUMENT_VERSION};
pub use instance::{ProblemInstance, SubspaceObjective};
pub use presets::{appendix_suite, mix_seed, scaled_dims, NamedConfig, HETEROGENEOUS_MAP, SUITE_DIMS};
