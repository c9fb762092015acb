//! Pipeline driver for the reconstruction toolkit: file formats, the
//! synthetic scene oracle, stage orchestration, and the `mvrecon` CLI.

pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use config::PipelineConfig;
pub use error::{CliError, CliResult};
