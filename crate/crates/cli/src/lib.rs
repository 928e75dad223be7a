//! Configuration-driven runner for the solvers in `hjbqvi-core`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod run;

pub use config::{parse_config, parse_str, ConfigError, RunSpec};
pub use run::{solve, study, validate_spec, RunOutcome};
