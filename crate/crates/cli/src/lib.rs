//! Library surface of the command-line driver, exposed so integration tests
//! can run complete pipelines in-process.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{
    cmd_agreement_sample, cmd_agreement_score, cmd_analyze, cmd_benchmark, cmd_classify,
    cmd_ingest, cmd_prelabel, cmd_report, AnalyzeBy, TOOL_VERSION,
};
pub use config::RunConfig;
pub use error::CliError;
