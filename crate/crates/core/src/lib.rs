//! Multi-equation genetic programming (MEGP) for symbolic regression.
//!
//! A standard tree-based GP engine evolves regression equations. MEGP runs it
//! repeatedly on a shrinking training set: each round keeps the points whose
//! absolute residual falls below the median residual as a new cluster, paired
//! with the equation that produced it. At prediction time the cluster
//! equations are combined using cluster sizes and the distance from the query
//! point to each cluster's members.
//!
//! Modules:
//!
//! - [`expr`] - expression trees, protected evaluation, genetic operators, s-expressions
//! - [`gp`] - a single GP search and best-of-runs selection
//! - [`cluster`] - iterative residual clustering producing a [`cluster::MegpModel`]
//! - [`predict`] - distance measures and the five combination strategies
//! - [`eval`] - rolling-origin splits, MAE, rank tests and the comparison experiment
//! - [`data`] - CSV I/O, cleaning rules, descriptive statistics, synthetic data
//! - [`cli`] - the `megp` command-line driver

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod cluster;
pub mod data;
pub mod error;
pub mod eval;
pub mod expr;
pub mod gp;
pub mod predict;
mod seed;

pub use cluster::{cluster, ClusterModel, MegpConfig, MegpModel};
pub use data::Dataset;
pub use error::{Error, Result};
pub use expr::{Expression, GpConfig};
pub use gp::{best_of_runs, fit, FitResult};
pub use predict::{predict, DistanceMeasure, PredictionApproach};
pub use seed::derive_seed;
