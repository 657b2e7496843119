//! Nonparametric estimation of stage waiting-time distributions and
//! cumulative incidence functions, conditional on a prior stage visit, in
//! progressive multi-stage survival models under right censoring.
//!
//! The model is a rooted tree of stages ([`stage_graph`]); data are
//! per-subject stage entry/exit histories ([`records`]). Two estimators
//! handle censoring: inverse-probability-of-censoring weighting
//! ([`counting`], [`censor_weights`]) and a fractional-risk variant that
//! adds the expected at-risk mass of subjects censored upstream
//! ([`fractional`]). Headline quantities are assembled in [`estimators`],
//! validated against synthetic cohorts from [`simulator`] via the L1
//! benchmark harness in [`bench`], and exposed through the `ms-wait` CLI
//! ([`cli`]).

pub mod bench;
pub mod censor_weights;
pub mod cli;
pub mod counting;
pub mod error;
pub mod estimators;
pub mod fractional;
pub mod records;
pub mod simulator;
pub mod stage_graph;
pub mod stepfun;

pub use error::{Error, Result};
pub use stage_graph::{StageGraph, StageId};
