//! Experiment runner for `randstop`: configuration, the per-cell pipeline and
//! result files.

pub mod config;
pub mod output;
pub mod run;

pub use config::{ConfigError, ExperimentConfig};
pub use run::{run, Report};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
struct Guide;
