//! Command implementations behind the `richrep` binary.

pub mod config;
pub mod report;
pub mod run;
pub mod verify;

pub use config::{schema_json, ExperimentConfig, Pipeline};
pub use report::{render, ReportKind};
pub use run::{exit_code, run_config, Overrides, VERSION};
