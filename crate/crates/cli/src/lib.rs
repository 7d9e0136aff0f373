//! Command-line driver: run configuration, checkpoint and CSV formats, and the
//! `train`, `oracle`, `evaluate` and `compare` commands.

// `!(x <= limit)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
mod error;

pub use error::{CliError, CliResult};
