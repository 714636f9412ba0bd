//! Nonparametric estimation of heterogeneous treatment effects.
//!
//! The crate provides the two-stage matching estimators for grid and random
//! covariate designs, the differencing and full-matching baselines, synthetic
//! scenario generation, lower-bound instance generators, reference rate
//! formulas and a Monte-Carlo harness that fits empirical error exponents.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adversarial;
pub mod baselines;
pub mod bench;
pub mod domain;
pub mod error;
pub mod fixed_design;
pub mod functions;
pub mod holder;
pub mod kernels;
pub mod neighbors;
pub mod random_design;
pub mod synth;
pub mod theory;

pub use domain::{Covariate, HolderSpec, Observation, ObservationSet, RngSeed, Stream};
pub use error::{HteError, Result};
