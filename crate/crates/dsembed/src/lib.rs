//! Training, experiments, model files and the command line of the
//! dataset-embedding parser. The numerics live in `dsembed-core`.

pub mod artifact;
pub mod config;
mod error;
pub mod experiment;
pub mod gradcheck;
pub mod io;
pub mod report;
pub mod synthetic;
pub mod train;

pub use dsembed_core as core;
pub use error::{Error, Result};
