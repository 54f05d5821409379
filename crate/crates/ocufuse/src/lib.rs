//! Std companion of `ocufuse-core`: file formats, configuration, the
//! end-to-end evaluation pipeline, report rendering and the `ocufuse`
//! command-line tool.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pipeline;
pub mod report;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
