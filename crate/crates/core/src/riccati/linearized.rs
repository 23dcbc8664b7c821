//! Riccati solution through a linear block system.
//!
//! For `dV/dt = C - D V - V A - V B V`, writing `V = W U^{-1}` gives
//! `d[W; U]/dt = [[-D, C], [B, A]] [W; U]` with `W(0) = V0`, `U(0) = I`.

use nalgebra::Matrix2;

use super::stiffness;
use crate::error::{Error, Result};
use crate::model::{build_system, PlantParams, Priors, StateSpace};
use crate::numerics::{mat_expm, Matrix};

/// Propagate `V0` for time `t` through the block exponential.
pub fn linearized_riccati(
    d: &Matrix,
    c: &Matrix,
    a: &Matrix,
    b: &Matrix,
    v0: &Matrix,
    t: f64,
) -> Result<Matrix> {
    let n = v0.nrows();
    for (name, m) in [("D", d), ("C", c), ("A", a), ("B", b), ("V0", v0)] {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::Dimension {
                op: "linearized_riccati",
                detail: format!("{name} is {}x{}, expected {n}x{n}", m.nrows(), m.ncols()),
            });
        }
    }
    let mut block = Matrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(&(-d));
    block.view_mut((0, n), (n, n)).copy_from(c);
    block.view_mut((n, 0), (n, n)).copy_from(b);
    block.view_mut((n, n), (n, n)).copy_from(a);
    let e = mat_expm(&(block * t))?;
    let mut start = Matrix::zeros(2 * n, n);
    start.view_mut((0, 0), (n, n)).copy_from(v0);
    start.view_mut((n, 0), (n, n)).fill_with_identity();
    let wu = e * start;
    let w = wu.rows(0, n).into_owned();
    let u = wu.rows(n, n).into_owned();
    let u_inv = u.try_inverse().ok_or(Error::Singular(
        "U block of the linearized Riccati solution",
    ))?;
    let v = w * u_inv;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalInstability {
            time: t,
            detail: "block exponential overflowed; use the numeric solver".into(),
        });
    }
    Ok(v)
}

/// Estimator covariance `Sigma(t)` from the block exponential.
///
/// The field coordinate is rescaled by `gamma J t` before exponentiating so
/// that the block entries stay of order one over the requested horizon.
pub fn linearized_riccati_solve(p: &PlantParams, prior: &Priors, t: f64) -> Result<Matrix2<f64>> {
    if !(t >= 0.0) {
        return Err(Error::Config(format!("time must be >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(prior.covariance());
    }
    propagate(&build_system(p), &prior.covariance(), t)
}

/// Block-exponential solution sampled on increasing `times`, restarted from
/// the previous sample on every interval. Intervals are split so that each
/// exponent stays below [`LINEARIZED_STEP`] times the local Riccati rate,
/// which keeps growing modes of the block system from overflowing when the
/// field fluctuates.
pub fn linearized_riccati_through(
    p: &PlantParams,
    prior: &Priors,
    times: &[f64],
) -> Result<Vec<Matrix2<f64>>> {
    if times.first().is_some_and(|&t| !(t >= 0.0)) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "linearized grid must be nonnegative and increasing".into(),
        ));
    }
    let sys = build_system(p);
    let mut out = Vec::with_capacity(times.len());
    let mut cov = prior.covariance();
    let mut t_prev = 0.0;
    for &t in times {
        let span = t - t_prev;
        if span > 0.0 {
            let rate = stiffness(&sys, &cov).max(f64::MIN_POSITIVE);
            let n = ((span * rate / LINEARIZED_STEP).ceil() as usize).max(1);
            let h = span / n as f64;
            for _ in 0..n {
                cov = propagate(&sys, &cov, h)?;
            }
        }
        out.push(cov);
        t_prev = t;
    }
    Ok(out)
}

/// Largest `h * rate` per block exponential in [`linearized_riccati_through`].
pub const LINEARIZED_STEP: f64 = 4.0;

fn propagate(sys: &StateSpace, cov0: &Matrix2<f64>, t: f64) -> Result<Matrix2<f64>> {
    let scale_b = {
        let gt = sys.a[(0, 1)].abs() * t;
        if gt > 1.0 {
            1.0 / gt
        } else {
            1.0
        }
    };
    // Sigma = S Sigma_hat S with S = diag(1, scale_b).
    let s = Matrix2::new(1.0, 0.0, 0.0, scale_b);
    let s_inv = Matrix2::new(1.0, 0.0, 0.0, 1.0 / scale_b);
    let a_hat = s_inv * sys.a * s;
    let q_hat = s_inv * sys.sigma1 * s_inv;
    let c_hat = sys.c * s;
    let v0_hat = s_inv * cov0 * s_inv;
    let dyn2 = |m: Matrix2<f64>| Matrix::from_iterator(2, 2, m.iter().copied());
    let v = linearized_riccati(
        &dyn2(-a_hat),
        &dyn2(q_hat),
        &dyn2(-a_hat.transpose()),
        &dyn2(c_hat.transpose() * c_hat / sys.sigma2),
        &dyn2(v0_hat),
        t,
    )
    .map_err(|e| match e {
        Error::NumericalInstability { detail, .. } => {
            Error::NumericalInstability { time: t, detail }
        }
        other => other,
    })?;
    let v_hat = Matrix2::new(v[(0, 0)], v[(0, 1)], v[(1, 0)], v[(1, 1)]);
    let out = s * v_hat * s;
    Ok(crate::numerics::symmetrize(&out))
}
