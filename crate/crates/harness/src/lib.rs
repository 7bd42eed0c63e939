//! Experiment harness: configs, seeded runs and horizon sweeps.

pub mod config;
pub mod run;
pub mod sweep;
