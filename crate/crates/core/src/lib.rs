pub mod agent;
pub mod assembly;
pub mod bench;
pub mod decomp;
pub mod error;
pub mod features;
pub mod pool;
pub mod runner;

pub use error::{Error, Result};
