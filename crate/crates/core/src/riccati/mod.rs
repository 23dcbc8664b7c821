//! Estimator and controller Riccati equations for the spin/field plant.
//!
//! The estimator covariance `Sigma(t)` obeys
//! `dSigma/dt = Sigma1 + A Sigma + Sigma A^T - Sigma C^T C Sigma / sigma_M`
//! from the diagonal prior. Three independent solution paths are provided:
//! RK4 integration, the closed-form constant-field entries, and the
//! linearizing `[W; U]` block exponential.

mod analytic;
mod linearized;
mod schedule;
mod steady;

pub use analytic::{analytic_sigma_b, analytic_sigma_z};
pub use linearized::{
    linearized_riccati, linearized_riccati_solve, linearized_riccati_through, LINEARIZED_STEP,
};
pub use schedule::GainSchedule;
pub use steady::{
    closed_form_ratio, controller_riccati_reverse, controller_riccati_steady, sigma_bs_approx,
    sigma_zs_approx, steady_state_gains, SteadyGains, CLOSED_FORM_MARGIN,
};

use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::model::{build_system, PlantParams, Priors, StateSpace};
use crate::numerics::rk4_step;

/// Sampled estimator covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovTrajectory {
    pub t: Vec<f64>,
    pub sigma_z: Vec<f64>,
    pub sigma_c: Vec<f64>,
    pub sigma_b: Vec<f64>,
}

impl CovTrajectory {
    fn with_capacity(n: usize) -> Self {
        Self {
            t: Vec::with_capacity(n),
            sigma_z: Vec::with_capacity(n),
            sigma_c: Vec::with_capacity(n),
            sigma_b: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, t: f64, s: &Matrix2<f64>) {
        self.t.push(t);
        self.sigma_z.push(s[(0, 0)]);
        self.sigma_c.push(0.5 * (s[(0, 1)] + s[(1, 0)]));
        self.sigma_b.push(s[(1, 1)]);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn matrix(&self, k: usize) -> Matrix2<f64> {
        Matrix2::new(
            self.sigma_z[k],
            self.sigma_c[k],
            self.sigma_c[k],
            self.sigma_b[k],
        )
    }

    /// Observer gain `Sigma C^T / sigma_M` at sample `k`.
    pub fn gain(&self, k: usize, sigma_m: f64) -> Vector2<f64> {
        Vector2::new(self.sigma_z[k], self.sigma_c[k]) / sigma_m
    }
}

/// Right-hand side of the estimator Riccati equation.
pub fn riccati_rhs(sys: &StateSpace, s: &Matrix2<f64>) -> Matrix2<f64> {
    let sc = s * sys.c.transpose();
    sys.sigma1 + sys.a * s + s * sys.a.transpose() - sc * sc.transpose() / sys.sigma2
}

fn to_vec(s: &Matrix2<f64>) -> [f64; 3] {
    [s[(0, 0)], s[(0, 1)], s[(1, 1)]]
}

fn from_slice(x: &[f64]) -> Matrix2<f64> {
    Matrix2::new(x[0], x[1], x[1], x[2])
}

fn rhs_packed(sys: &StateSpace) -> impl FnMut(f64, &[f64], &mut [f64]) + '_ {
    move |_, x, dx| {
        let d = riccati_rhs(sys, &from_slice(x));
        dx[0] = d[(0, 0)];
        dx[1] = 0.5 * (d[(0, 1)] + d[(1, 0)]);
        dx[2] = d[(1, 1)];
    }
}

fn check_psd(t: f64, s: &Matrix2<f64>) -> Result<()> {
    let scale = s.abs().max();
    let tol = 1e-9 * scale;
    let (a, c, d) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
    if !(a.is_finite() && c.is_finite() && d.is_finite()) {
        return Err(Error::Divergence { time: t });
    }
    if a < -tol || d < -tol || c * c - a.max(0.0) * d.max(0.0) > tol * scale {
        return Err(Error::NumericalInstability {
            time: t,
            detail: format!("covariance left the PSD cone (zz {a:e}, zb {c:e}, bb {d:e})"),
        });
    }
    Ok(())
}

/// Twice the spectral radius of the error dynamics `A - Sigma C^T C / sigma_M`,
/// which bounds the local rate of the Riccati flow at `s`.
pub(crate) fn stiffness(sys: &StateSpace, s: &Matrix2<f64>) -> f64 {
    let k = s * sys.c.transpose() / sys.sigma2;
    let f = sys.a - k * sys.c;
    let tr = f.trace();
    let det = f.determinant();
    let disc = tr * tr - 4.0 * det;
    let radius = if disc < 0.0 {
        det.sqrt()
    } else {
        0.5 * (tr.abs() + disc.sqrt())
    };
    2.0 * radius
}

/// Largest observer gain the solution will see: the initial one, or the
/// steady-state one when the field fluctuates.
pub fn peak_observer_gain(p: &PlantParams, prior: &Priors) -> f64 {
    let initial = prior.sigma_z0 / p.sigma_m();
    let steady = steady::steady_observer_gain(p).map(|k| k[0]).unwrap_or(0.0);
    initial.max(steady)
}

/// RK4 on a uniform grid of step `dt` up to `t_end`.
pub fn integrate_estimator_riccati(
    p: &PlantParams,
    prior: &Priors,
    dt: f64,
    t_end: f64,
) -> Result<CovTrajectory> {
    let sys = build_system(p);
    integrate_riccati_uniform(&sys, prior, dt, t_end)
}

pub(crate) fn integrate_riccati_uniform(
    sys: &StateSpace,
    prior: &Priors,
    dt: f64,
    t_end: f64,
) -> Result<CovTrajectory> {
    if !(dt > 0.0 && t_end > 0.0) {
        return Err(Error::Config(format!(
            "need dt > 0 and T > 0 (dt = {dt}, T = {t_end})"
        )));
    }
    let k_peak = {
        let initial = prior.sigma_z0 / sys.sigma2;
        let steady = steady::observer_gain_for(sys).map(|k| k[0]).unwrap_or(0.0);
        initial.max(steady)
    };
    if dt * k_peak >= 0.1 {
        return Err(Error::StepSize(format!(
            "dt * K_O1 = {:.3e} must stay below 0.1 (peak observer gain {k_peak:.3e} 1/s)",
            dt * k_peak
        )));
    }
    let steps = (t_end / dt).round().max(1.0) as usize;
    let mut out = CovTrajectory::with_capacity(steps + 1);
    let s0 = prior.covariance();
    out.push(0.0, &s0);
    let mut f = rhs_packed(sys);
    let mut x = to_vec(&s0).to_vec();
    let mut next = vec![0.0; 3];
    for k in 0..steps {
        let t = k as f64 * dt;
        let h = if k + 1 == steps { t_end - t } else { dt };
        rk4_step(&mut f, t, &x, h, &mut next);
        std::mem::swap(&mut x, &mut next);
        let s = from_slice(&x);
        check_psd(t + h, &s)?;
        out.push(
            if k + 1 == steps {
                t_end
            } else {
                (k + 1) as f64 * dt
            },
            &s,
        );
    }
    Ok(out)
}

/// RK4 through the given output times. Each interval is split into equal
/// substeps so that `h * rate <= 0.05`, where `rate` bounds the local Jacobian
/// of the Riccati flow; the substep count is a deterministic function of the
/// state at the start of the interval.
pub fn integrate_estimator_riccati_on(
    p: &PlantParams,
    prior: &Priors,
    times: &[f64],
) -> Result<CovTrajectory> {
    integrate_riccati_through(&build_system(p), prior, times)
}

pub(crate) fn integrate_riccati_through(
    sys: &StateSpace,
    prior: &Priors,
    times: &[f64],
) -> Result<CovTrajectory> {
    if times.first() != Some(&0.0) || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "Riccati output times must start at 0 and increase".into(),
        ));
    }
    let k_steady = steady::observer_gain_for(sys)
        .map(|k| 2.0 * k[0])
        .unwrap_or(0.0);
    let mut out = CovTrajectory::with_capacity(times.len());
    let s0 = prior.covariance();
    out.push(0.0, &s0);
    let mut f = rhs_packed(sys);
    let mut x = to_vec(&s0).to_vec();
    let mut next = vec![0.0; 3];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let rate = stiffness(sys, &from_slice(&x)).max(k_steady);
        let n = ((span * rate / 0.05).ceil() as usize).max(1);
        let h = span / n as f64;
        for i in 0..n {
            rk4_step(&mut f, w[0] + i as f64 * h, &x, h, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        let s = from_slice(&x);
        check_psd(w[1], &s)?;
        out.push(w[1], &s);
    }
    Ok(out)
}

/// Natural time scale of the initial transient, `sigma_M / sigma_z0`, or the
/// inverse precession rate when the spin prior vanishes.
pub fn initial_time_scale(p: &PlantParams, prior: &Priors) -> f64 {
    if prior.sigma_z0 > 0.0 {
        p.sigma_m() / prior.sigma_z0
    } else {
        1.0 / p.gamma_j()
    }
}
