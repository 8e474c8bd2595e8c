//! Command-line pipeline around the `packs` library: mines pack signatures
//! from a labeled CSV, applies them to new data, generates synthetic
//! benchmarks, and summarizes packing metrics.

pub mod config;
pub mod detect;
pub mod error;
pub mod metrics;
pub mod packing_file;
pub mod pipeline;

pub use config::PipelineConfig;
pub use error::{CliError, Result};
pub use pipeline::{explain, write_outputs, ExplainOutcome};
