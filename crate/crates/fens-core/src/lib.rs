//! Training, ensembling, and fairness metrics for homogeneous model pools.
//!
//! A pool is a set of identically configured models that differ only through
//! training randomness: weight initialization, batch ordering, and data
//! augmentation. This crate provides the deterministic seed machinery that
//! isolates those sources ([`rng`]), tabular datasets ([`dataset`]), two
//! desk-scale learners ([`learners`]), prediction aggregation with bootstrap
//! ensemble-size curves ([`ensemble`]), per-group fairness metrics
//! ([`metrics`]), and severity-graded input corruptions ([`corruption`]).
//!
//! Everything downstream of a seed is reproducible bit for bit: streams are
//! counter-based, tie-breaks resolve to the lowest index, and degenerate
//! statistics (identical members, identical trajectories) come out exactly
//! zero rather than rounding dust.

pub mod corruption;
pub mod dataset;
pub mod ensemble;
pub mod error;
pub mod learners;
pub mod metrics;
pub mod rng;
mod stats;

pub use error::{Error, Result};
