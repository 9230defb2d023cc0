//! File formats, configuration, dataset/training/evaluation drivers and the
//! command-line surface around `interestyle-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod container;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod fsutil;
pub mod imageio;
pub mod plot;
pub mod train;

pub use error::{Error, Result};
pub use interestyle_core as core;
