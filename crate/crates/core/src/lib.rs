//! Optimal dividends in the dual risk model under stochastic discounting.
//!
//! The surplus of a company in the dual model decreases at a constant
//! expense rate and jumps upwards by exponentially distributed gains that
//! arrive as a Poisson process. Dividends are discounted by a geometric
//! Brownian factor `exp(-r - m t - delta B_t)` or by the exponential of a
//! Levy process. This crate provides
//!
//! * closed-form value functions for the optimal threshold strategy
//!   (dividend rate capped at `xi`) and the optimal barrier strategy
//!   (unrestricted dividends), see [`closed_form`];
//! * the reduction of exponential-Levy discounting to an effective drift,
//!   see [`levy`];
//! * an HJB residual checker, see [`hjb`];
//! * an event-driven Monte Carlo simulator for arbitrary strategies, see
//!   [`sim`];
//! * the `dualdiv` command line front end, see [`cli`].

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod error;
pub mod hjb;
pub mod levy;
pub mod model;
pub mod quad;
pub mod sim;
mod util;

pub use closed_form::{
    barrier_value, characteristic_roots, full_payout_value, solve_barrier, solve_signed_quadratic,
    solve_threshold, threshold_value, BarrierSolution, QuadraticRoots, Regime, RootSet, Solution,
    ThresholdSolution,
};
pub use error::{Error, ErrorClass, Result};
pub use hjb::{residual_restricted, residual_unrestricted, ResidualReport};
pub use levy::{effective_drift, reduce_model, LevyMeasure, LevyMeasureSpec, LevyReduction};
pub use model::{
    effective_theta, validate, DiscountSpec, DualModelParams, EffectiveRate, ValidatedModel,
};
pub use sim::{
    dominance_study, estimate_value, sample_path, Estimator, SimConfig, SimEstimate, Strategy,
};
