//! Simulation and estimation toolkit for continuously measured spin-ensemble
//! magnetometry.
//!
//! The crate follows a polarized collective spin `J` precessing in a scalar
//! field `b(t)` while its `z` component is continuously measured. It provides:
//!
//! * [`truth_sim`]: the linear-Gaussian truth model (Ornstein-Uhlenbeck field,
//!   integrating spin, white-noise photocurrent),
//! * [`riccati`]: the estimator Riccati equation solved numerically, in closed
//!   form for constant fields, and through a linearizing block exponential,
//!   plus the steady-state observer/controller gains,
//! * [`lqg_filter`]: Kalman filter and LQG controller runs on measurement records,
//! * [`total_covariance`]: deterministic joint plant/estimator covariance for
//!   designs built with the wrong spin number,
//! * [`freq`]: steady-state transfer functions, characteristic frequencies and a
//!   robust loop-shaping designer,
//! * [`qsme`]: a small-spin stochastic master equation filter used to check the
//!   Gaussian reduction,
//! * [`cli`]: scenario files and the experiment commands behind the `spinmag`
//!   binary.
//!
//! All units are natural: seconds for time, dimensionless spin and field.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod freq;
pub mod lqg_filter;
pub mod model;
pub mod numerics;
pub mod output;
pub mod qsme;
pub mod riccati;
pub mod total_covariance;
pub mod truth_sim;

pub use error::{Error, Result};
pub use model::{DesignParams, PlantParams, Priors, StateSpace};
pub use numerics::RngStream;
