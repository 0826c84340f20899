// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod lab;
pub mod manifest;
pub mod scores;
pub mod service;

pub use commands::dispatch;
pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use lab::{Endpoints, Lab, Simulation};
