//! Command-line front end for `filter_audit`: config parsing, dispatch and
//! report files.

pub mod config;
pub mod error;
pub mod report;

pub use config::{parse_config, render, Command, RunConfig, RunSpec};
pub use error::{CliError, Result};
pub use report::{emit_report, execute, Report};
