//! Experiment runner for surrogate projected gradient descent: config
//! parsing, per-seed orchestration and report writing.

pub mod config;
pub mod experiment;
pub mod report;
