//! Balancing-weight estimation of individualized treatment effects (ITEs)
//! for high-dimensional observational data.
//!
//! Two estimators are implemented, plus a regularized-OLS baseline:
//!
//! * **Counterfactual balancing** solves a simplex-constrained program per
//!   treatment arm that trades the spread of the weights against the
//!   distance between the arm's weighted feature means and the training
//!   population's means, then fits weighted elastic nets per arm.
//! * **Factual-counterfactual balancing** first fits unweighted elastic-net
//!   anchors per arm, then refits with the balancing weights under a ridge
//!   penalty toward the anchor, trading counterfactual accuracy against the
//!   stability of the factual fit.
//!
//! The ITE estimate for features `x` is the difference of the two arm
//! predictions. The crate also ships the simulation benchmarks used to
//! compare the methods (PEHE on held-out potential outcomes), plug-in
//! diagnostics for the estimators' error-bound expressions, and a CLI.

pub mod balance;
pub mod cli;
pub mod data;
pub mod error;
pub mod estimator;
pub mod evaluate;
pub mod linalg;
pub mod regress;
pub mod simulate;

pub use error::{Error, Result};
