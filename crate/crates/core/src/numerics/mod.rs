//! Small dense linear algebra, fixed-step integrators and seeded random streams.

mod linalg;
mod ode;
mod rng;

pub use linalg::{is_psd2, mat_expm, symmetrize, Matrix};
pub use ode::{euler_maruyama_step, geometric_grid, ode_rk4, ode_rk4_through, rk4_step, OdePath};
pub use rng::{mix_seed, RngStream};
