//! Library side of the `posefuse` command-line tool: configuration, the
//! subcommands and the streaming line protocol.

pub mod commands;
pub mod config;
pub mod error;
pub mod stream;

pub use config::PipelineConfig;
pub use error::CliError;
