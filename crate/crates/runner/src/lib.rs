#![allow(clippy::neg_cmp_op_on_partial_ord)]
//! Scenario runner, batch execution and environment server for `seasim`.

pub mod config;
pub mod batch;
pub mod env;
pub mod error;
pub mod protocol;
pub mod run;
pub mod sim;

pub use config::{parse_scenario, validate_config, Diagnostic, Scenario};
pub use error::{RunError, RunResult};
pub use run::{run_scenario, RunManifest};
