//! Detection of heterogeneous treatment effects in randomized experiments with
//! false discovery rate control.
//!
//! Two procedures are provided. [`pipelines::hte_bh`] tests every subgroup of a
//! categorical covariate against the average treatment effect using transformed
//! outcomes and the Benjamini-Hochberg step-up rule.
//! [`pipelines::hte_knockoff`] selects the covariates (at most one categorical
//! plus any continuous ones) that drive effect heterogeneity using the fixed-X
//! knockoff filter. Naive and Bonferroni baselines and a Monte-Carlo harness
//! ([`sim`]) for measuring empirical FDR and power are included.
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`); the aliases below
//! fix it to `f64`, which is what the data and simulation layers use.

pub mod cli;
pub mod data;
mod error;
pub mod knockoff;
pub mod mht;
pub mod numerics;
pub mod pipelines;
mod real;
pub mod sim;

pub use error::{Error, Result};
pub use real::Real;

pub type Matrix = numerics::DenseMatrix<f64>;
pub type MatrixF32 = numerics::DenseMatrix<f32>;
pub type Design = data::DesignMatrix<f64>;
pub type PValues = mht::PValueSet<f64>;
pub type Selection = mht::SelectionResult<f64>;
pub type Knockoffs = knockoff::KnockoffArtifacts<f64>;
