//! Experiment runner for `partivae`: JSON configurations, dataset loading,
//! training, sweeps, sampling, oracles and MCMC baselines, with
//! deterministic, canonical outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod model;
pub mod record;

pub use error::{CliError, CliResult};
