//! Experiment orchestration for homogeneous-ensemble fairness studies:
//! TOML configuration, an on-disk prediction cache, a mode-by-mode runner,
//! and CSV report emission behind a CLI.

pub mod cache;
pub mod config;
pub mod manifest;
pub mod report;
pub mod runner;
