//! Small-spin quantum filter: conditional master equation, gridded Bayes
//! posterior over the field, and checks against the Gaussian reduction.

mod bayes;
mod sme;
mod spin;
pub mod verify;

pub use bayes::{bayes_grid_update, FieldGrid};
pub use sme::{innovation, sme_step, SmeParams, POSITIVITY_TOL, SME_STEP_LIMIT};
pub use spin::{coherent_state_x, spin_operators, CMatrix, QuantumState, SpinOperators, MAX_SPIN};
pub use verify::{OracleConfig, SuiteReport, SuiteSeries};
