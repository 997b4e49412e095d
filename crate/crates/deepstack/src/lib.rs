//! File formats, dataset cache, result ledgers and the command-line runner
//! for `deepstack-core`.

pub mod cache;
pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod ledger;
pub mod model_file;
pub mod pgm;
pub mod report;

pub use config::RunConfig;
pub use error::{Error, Result};
