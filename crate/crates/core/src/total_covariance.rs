//! Joint covariance of the truth state and a (possibly mismatched) estimator.
//!
//! The total state `theta = [z, b, z~, b~]` obeys
//! `d theta = alpha(t) theta dt + beta(t) dW` with
//!
//! ```text
//! alpha = [[A, -B K_C'], [K_O'(t) C, A' - B' K_C' - K_O'(t) C]]
//! beta  = rows [0; (0, sqrt(sigma_bF), 0, 0); (0, 0, sqrt(sigma_M) K_O1', 0);
//!               (0, 0, sqrt(sigma_M) K_O2', 0)]
//! ```
//!
//! so `Theta = E[theta theta^T]` follows `dTheta/dt = alpha Theta + Theta
//! alpha^T + beta beta^T`. Primed quantities come from the design spin `J'`.
//!
//! Propagation is carried out in truth/error coordinates `[z, b, z~ - z,
//! b~ - b]`; the estimation error variance is then a diagonal entry instead of
//! a difference of nearly equal second moments.

use std::io::Write;

use nalgebra::{Matrix2, Matrix4, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::model::{build_system, DesignParams, PlantParams, Priors, StateSpace};
use crate::numerics::{mat_expm, rk4_step, Matrix};
use crate::output::write_columns;
use crate::riccati::{
    controller_riccati_steady, integrate_riccati_through, riccati_rhs, steady_state_gains,
    stiffness, GainSchedule,
};

/// Total covariance at one time, in the estimator-state coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TotalCov {
    pub t: f64,
    pub theta: Matrix4<f64>,
    /// `E[(b~ - b)^2]` taken directly from the error coordinates.
    pub sigma_be: f64,
    /// `E[(z~ - z)^2]` taken directly from the error coordinates.
    pub sigma_ze: f64,
}

/// `sigma_bb + sigma_b~b~ - 2 sigma_bb~`.
pub fn magnetometry_error(theta: &TotalCov) -> f64 {
    let th = &theta.theta;
    th[(1, 1)] + th[(3, 3)] - 2.0 * th[(1, 3)]
}

/// `diag(sigma_z0, sigma_b0, 0, 0)`: the estimator starts at zero.
pub fn theta0(prior: &Priors) -> Matrix4<f64> {
    Matrix4::from_diagonal(&nalgebra::Vector4::new(
        prior.sigma_z0,
        prior.sigma_b0,
        0.0,
        0.0,
    ))
}

// theta_err = T theta with T = [[I, 0], [-I, I]].
fn t_fwd() -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    t[(2, 0)] = -1.0;
    t[(3, 1)] = -1.0;
    t
}

fn t_inv() -> Matrix4<f64> {
    let mut t = Matrix4::identity();
    t[(2, 0)] = 1.0;
    t[(3, 1)] = 1.0;
    t
}

fn to_error(theta: &Matrix4<f64>) -> Matrix4<f64> {
    t_fwd() * theta * t_fwd().transpose()
}

fn from_error(theta_e: &Matrix4<f64>) -> Matrix4<f64> {
    t_inv() * theta_e * t_inv().transpose()
}

fn sym4(m: &Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}

fn record(t: f64, theta_e: &Matrix4<f64>) -> Result<TotalCov> {
    let theta_e = sym4(theta_e);
    if theta_e.iter().any(|v| !v.is_finite()) {
        return Err(Error::Divergence { time: t });
    }
    let scale = theta_e.abs().max();
    let tol = 1e-9 * scale.max(f64::MIN_POSITIVE);
    if (0..4).any(|i| theta_e[(i, i)] < -tol) {
        return Err(Error::NumericalInstability {
            time: t,
            detail: "total covariance has a negative variance".into(),
        });
    }
    Ok(TotalCov {
        t,
        theta: from_error(&theta_e),
        sigma_be: theta_e[(3, 3)].max(0.0),
        sigma_ze: theta_e[(2, 2)].max(0.0),
    })
}

/// Truth and design matrices plus the gains that close the loop.
#[derive(Debug, Clone)]
pub struct TotalDynamics {
    pub truth: StateSpace,
    pub design: StateSpace,
    pub k_c: RowVector2<f64>,
    pub gains: GainSchedule,
}

impl TotalDynamics {
    /// `alpha` for observer gain `k`.
    pub fn alpha_for(&self, k: &Vector2<f64>) -> Matrix4<f64> {
        let (tr, de) = (&self.truth, &self.design);
        let upper_right = -(tr.b * self.k_c);
        let lower_left = k * tr.c;
        let lower_right = de.a - de.b * self.k_c - k * de.c;
        let mut a = Matrix4::zeros();
        a.fixed_view_mut::<2, 2>(0, 0).copy_from(&tr.a);
        a.fixed_view_mut::<2, 2>(0, 2).copy_from(&upper_right);
        a.fixed_view_mut::<2, 2>(2, 0).copy_from(&lower_left);
        a.fixed_view_mut::<2, 2>(2, 2).copy_from(&lower_right);
        a
    }

    /// `beta` for observer gain `k`.
    pub fn beta_for(&self, k: &Vector2<f64>) -> Matrix4<f64> {
        let mut b = Matrix4::zeros();
        b[(1, 1)] = self.truth.sigma1[(1, 1)].sqrt();
        let s = self.truth.sigma2.sqrt();
        b[(2, 2)] = s * k[0];
        b[(3, 2)] = s * k[1];
        b
    }

    pub fn alpha(&self, t: f64) -> Matrix4<f64> {
        self.alpha_for(&self.gains.at(t))
    }

    pub fn beta(&self, t: f64) -> Matrix4<f64> {
        self.beta_for(&self.gains.at(t))
    }

    /// Drift and noise intensity in error coordinates.
    fn error_system(&self, k: &Vector2<f64>) -> (Matrix4<f64>, Matrix4<f64>) {
        let a = t_fwd() * self.alpha_for(k) * t_inv();
        let b = t_fwd() * self.beta_for(k);
        (a, b * b.transpose())
    }
}

/// Assemble the total dynamics; a tabulated gain must match `grid`.
pub fn build_alpha_beta(
    p: &PlantParams,
    d: &DesignParams,
    gains: GainSchedule,
    k_c: RowVector2<f64>,
    grid: &[f64],
) -> Result<TotalDynamics> {
    gains.check_grid(grid)?;
    Ok(TotalDynamics {
        truth: build_system(p),
        design: build_system(&d.assumed_plant(p)?),
        k_c,
        gains,
    })
}

fn lyapunov_rhs(a: &Matrix4<f64>, q: &Matrix4<f64>, x: &[f64], dx: &mut [f64]) {
    let th = Matrix4::from_column_slice(x);
    let d = a * th + th * a.transpose() + q;
    dx.copy_from_slice(d.as_slice());
}

fn spectral_radius(a: &Matrix4<f64>) -> f64 {
    a.complex_eigenvalues()
        .iter()
        .map(|l| l.norm())
        .fold(0.0, f64::max)
}

/// RK4 through `times` with `substeps` equal steps per interval; the gain is
/// read from the schedule at every stage time.
pub fn integrate_theta(
    dynamics: &TotalDynamics,
    theta_start: &Matrix4<f64>,
    times: &[f64],
    substeps: usize,
) -> Result<Vec<TotalCov>> {
    check_times(times)?;
    let substeps = substeps.max(1);
    let mut out = vec![record(times[0], &to_error(theta_start))?];
    let mut x = to_error(theta_start).as_slice().to_vec();
    let mut next = vec![0.0; 16];
    let mut f = |t: f64, x: &[f64], dx: &mut [f64]| {
        let (a, q) = dynamics.error_system(&dynamics.gains.at(t));
        lyapunov_rhs(&a, &q, x, dx);
    };
    for (i, w) in times.windows(2).enumerate() {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            // Piecewise gains are sampled on the left of each interval so a
            // stage landing on the right edge does not pick up the next value.
            let t = w[0] + s as f64 * h;
            if let GainSchedule::Piecewise { k, .. } = &dynamics.gains {
                let (a, q) = dynamics.error_system(&k[i.min(k.len() - 1)]);
                let mut g = |_: f64, x: &[f64], dx: &mut [f64]| lyapunov_rhs(&a, &q, x, dx);
                rk4_step(&mut g, t, &x, h, &mut next);
            } else {
                rk4_step(&mut f, t, &x, h, &mut next);
            }
            std::mem::swap(&mut x, &mut next);
        }
        out.push(record(w[1], &Matrix4::from_column_slice(&x))?);
    }
    Ok(out)
}

/// Exact propagation for gains held constant on each interval:
/// `Theta(t+h) = Phi Theta Phi^T + Q(h)`, with `Phi = exp(alpha h)` and the
/// noise integral `Q(h)` from a block exponential on a short step followed
/// by repeated doubling.
pub fn integrate_theta_exact(
    dynamics: &TotalDynamics,
    theta_start: &Matrix4<f64>,
    times: &[f64],
) -> Result<Vec<TotalCov>> {
    check_times(times)?;
    let mut th = to_error(theta_start);
    let mut out = vec![record(times[0], &th)?];
    for (i, w) in times.windows(2).enumerate() {
        let k = match &dynamics.gains {
            GainSchedule::Constant(k) => *k,
            GainSchedule::Piecewise { k, .. } => k[i.min(k.len() - 1)],
            GainSchedule::Tabulated { k, .. } => (k[i] + k[(i + 1).min(k.len() - 1)]) * 0.5,
        };
        let (a, q) = dynamics.error_system(&k);
        let (phi, noise) = interval_propagator(&a, &q, w[1] - w[0])?;
        th = sym4(&(phi * th * phi.transpose() + noise));
        out.push(record(w[1], &th)?);
    }
    Ok(out)
}

/// `(exp(a h), int_0^h exp(a s) q exp(a^T s) ds)`.
pub fn interval_propagator(
    a: &Matrix4<f64>,
    q: &Matrix4<f64>,
    h: f64,
) -> Result<(Matrix4<f64>, Matrix4<f64>)> {
    let norm = (0..4)
        .map(|i| (0..4).map(|j| a[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let doublings = if norm * h > 0.5 {
        (norm * h / 0.5).log2().ceil() as i32
    } else {
        0
    };
    let h0 = h / 2f64.powi(doublings);
    let mut block = Matrix::zeros(8, 8);
    for i in 0..4 {
        for j in 0..4 {
            block[(i, j)] = -a[(i, j)] * h0;
            block[(i, 4 + j)] = q[(i, j)] * h0;
            block[(4 + i, 4 + j)] = a[(j, i)] * h0;
        }
    }
    let e = mat_expm(&block)?;
    let mut phi = Matrix4::zeros();
    let mut g12 = Matrix4::zeros();
    for i in 0..4 {
        for j in 0..4 {
            phi[(i, j)] = e[(4 + j, 4 + i)];
            g12[(i, j)] = e[(i, 4 + j)];
        }
    }
    let mut noise = sym4(&(phi * g12));
    for _ in 0..doublings {
        noise = sym4(&(phi * noise * phi.transpose() + noise));
        phi = phi * phi;
    }
    if phi.iter().chain(noise.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NumericalInstability {
            time: h,
            detail: "interval propagator overflowed".into(),
        });
    }
    Ok((phi, noise))
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "total covariance needs an increasing time grid".into(),
        ));
    }
    Ok(())
}

/// How the total covariance is propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagation {
    /// Exact interval propagators with the designer gain taken at each
    /// interval midpoint.
    Exact,
    /// RK4 integrating the designer's Riccati equation alongside `Theta`, so
    /// the gain is exact at every stage.
    Joint,
}

/// Controller gain used by design `d` (zero when `lambda = 0`).
pub fn design_controller_gain(p: &PlantParams, d: &DesignParams) -> Result<RowVector2<f64>> {
    if d.lambda > 0.0 {
        controller_riccati_steady(p, d)
    } else {
        Ok(RowVector2::zeros())
    }
}

/// Total covariance of a plant with spin `J` run by an estimator/controller
/// designed for `J'`, sampled at `times` (which must start at 0).
///
/// The designer's prior on `z` is the truth prior rescaled by `J'/J`.
pub fn mismatch_covariance(
    p: &PlantParams,
    prior: &Priors,
    d: &DesignParams,
    times: &[f64],
    method: Propagation,
) -> Result<Vec<TotalCov>> {
    check_times(times)?;
    if times[0] != 0.0 {
        return Err(Error::Config(
            "total covariance grid must start at t = 0".into(),
        ));
    }
    let k_c = design_controller_gain(p, d)?;
    let design_sys = build_system(&d.assumed_plant(p)?);
    let design_prior = prior.for_design(p, d);
    match method {
        Propagation::Exact => {
            let mut refined = Vec::with_capacity(2 * times.len());
            for w in times.windows(2) {
                refined.push(w[0]);
                refined.push(0.5 * (w[0] + w[1]));
            }
            refined.push(*times.last().unwrap());
            let cov = integrate_riccati_through(&design_sys, &design_prior, &refined)?;
            let k = (0..times.len() - 1)
                .map(|i| cov.gain(2 * i + 1, design_sys.sigma2))
                .collect();
            let gains = GainSchedule::Piecewise {
                t: times.to_vec(),
                k,
            };
            let dynamics = build_alpha_beta(p, d, gains, k_c, times)?;
            integrate_theta_exact(&dynamics, &theta0(prior), times)
        }
        Propagation::Joint => joint_rk4(p, d, prior, &design_prior, k_c, times),
    }
}

/// Total covariance when the observer runs on the constant steady-state gain
/// of design `d` from `t = 0` instead of the Riccati schedule.
pub fn steady_gain_covariance(
    p: &PlantParams,
    prior: &Priors,
    d: &DesignParams,
    times: &[f64],
) -> Result<Vec<TotalCov>> {
    check_times(times)?;
    let k_o = steady_state_gains(p, d)?.k_o;
    let k_c = design_controller_gain(p, d)?;
    let dynamics = build_alpha_beta(p, d, GainSchedule::Constant(k_o), k_c, times)?;
    integrate_theta_exact(&dynamics, &theta0(prior), times)
}

fn joint_rk4(
    p: &PlantParams,
    d: &DesignParams,
    prior: &Priors,
    design_prior: &Priors,
    k_c: RowVector2<f64>,
    times: &[f64],
) -> Result<Vec<TotalCov>> {
    let dynamics = TotalDynamics {
        truth: build_system(p),
        design: build_system(&d.assumed_plant(p)?),
        k_c,
        gains: GainSchedule::Constant(Vector2::zeros()),
    };
    let de = dynamics.design;
    let mut f = |_: f64, x: &[f64], dx: &mut [f64]| {
        let s = Matrix2::new(x[16], x[17], x[17], x[18]);
        let k = Vector2::new(x[16], x[17]) / de.sigma2;
        let (a, q) = dynamics.error_system(&k);
        lyapunov_rhs(&a, &q, &x[..16], &mut dx[..16]);
        let r = riccati_rhs(&de, &s);
        dx[16] = r[(0, 0)];
        dx[17] = 0.5 * (r[(0, 1)] + r[(1, 0)]);
        dx[18] = r[(1, 1)];
    };
    let th = to_error(&theta0(prior));
    let s0 = design_prior.covariance();
    let mut x: Vec<f64> = th.as_slice().to_vec();
    x.extend([s0[(0, 0)], s0[(0, 1)], s0[(1, 1)]]);
    let mut next = vec![0.0; 19];
    let mut out = vec![record(times[0], &th)?];
    for w in times.windows(2) {
        let s = Matrix2::new(x[16], x[17], x[17], x[18]);
        let k = Vector2::new(x[16], x[17]) / de.sigma2;
        let (a, _) = dynamics.error_system(&k);
        let rate = (2.0 * spectral_radius(&a)).max(stiffness(&de, &s));
        let span = w[1] - w[0];
        let n = ((span * rate / 0.05).ceil() as usize).max(1);
        let h = span / n as f64;
        for i in 0..n {
            rk4_step(&mut f, w[0] + i as f64 * h, &x, h, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        out.push(record(w[1], &Matrix4::from_column_slice(&x[..16]))?);
    }
    Ok(out)
}

/// Write `t, sigma_bE` and the ten distinct entries of `Theta`.
pub fn write_total_csv<W: Write>(out: W, rows: &[TotalCov]) -> Result<()> {
    let names = ["z", "b", "zt", "bt"];
    let mut headers: Vec<String> = vec!["t".into(), "sigma_bE".into()];
    let mut cols: Vec<Vec<f64>> = vec![
        rows.iter().map(|r| r.t).collect(),
        rows.iter().map(|r| r.sigma_be).collect(),
    ];
    for i in 0..4 {
        for j in i..4 {
            headers.push(format!("theta_{}_{}", names[i], names[j]));
            cols.push(rows.iter().map(|r| r.theta[(i, j)]).collect());
        }
    }
    let h: Vec<&str> = headers.iter().map(String::as_str).collect();
    let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_columns(out, &h, &c)
}

/// Asymptotic regimes of the mismatch analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MismatchRegime {
    /// `(1 - f)^2`, multiplying `sigma_bFree`.
    UncontrolledFluctuating,
    /// `(1 - f)^2`, multiplying `sigma_b0`.
    UncontrolledConstant,
    /// `(1 + f) / (2 f)`, multiplying the matched steady error at `J'`.
    ControlledSteady,
    /// `(f^2 + 2) / (4 f^2 - 1)`, multiplying the matched transient error at
    /// `J'`; only valid for `f > 1/2`.
    ControlledTransient,
}

/// Closed-form mismatch factor for `f = J / J'`.
pub fn mismatch_factors(f: f64, regime: MismatchRegime) -> Result<f64> {
    if !(f > 0.0) || !f.is_finite() {
        return Err(Error::InvalidParameter {
            name: "f",
            value: f,
            reason: "spin ratio J/J' must be finite and > 0",
        });
    }
    Ok(match regime {
        MismatchRegime::UncontrolledFluctuating | MismatchRegime::UncontrolledConstant => {
            (1.0 - f).powi(2)
        }
        MismatchRegime::ControlledSteady => (1.0 + f) / (2.0 * f),
        MismatchRegime::ControlledTransient => {
            if f <= 0.5 {
                return Err(Error::OutOfValidity(format!(
                    "transient factor needs f > 1/2, got f = {f}"
                )));
            }
            (f * f + 2.0) / (4.0 * f * f - 1.0)
        }
    })
}

/// Matched Riccati field variance of the design plant on `times`, for
/// normalizing mismatch curves.
pub fn design_field_variance(
    p: &PlantParams,
    prior: &Priors,
    d: &DesignParams,
    times: &[f64],
) -> Result<Vec<f64>> {
    let sys = build_system(&d.assumed_plant(p)?);
    Ok(integrate_riccati_through(&sys, &prior.for_design(p, d), times)?.sigma_b)
}

/// Check that a covariance matrix is symmetric positive semidefinite.
pub fn is_psd4(m: &Matrix4<f64>, tol: f64) -> bool {
    let s = sym4(m);
    (s - m).abs().max() <= tol && s.symmetric_eigenvalues().iter().all(|&l| l >= -tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::geometric_grid;
    use crate::riccati::integrate_estimator_riccati_on;

    fn fluctuating(j: f64) -> PlantParams {
        PlantParams::fluctuating(j, 1e6, 1e4, 1e5, 1.0).unwrap()
    }

    #[test]
    fn block_structure() {
        let p = fluctuating(1e6);
        let d = DesignParams::matched(&p, 0.0).unwrap();
        let k = Vector2::new(3.0, 5.0);
        let dynamics =
            build_alpha_beta(&p, &d, GainSchedule::Constant(k), RowVector2::zeros(), &[]).unwrap();
        let a = dynamics.alpha(0.0);
        assert_eq!(a.fixed_view::<2, 2>(0, 2).into_owned(), Matrix2::zeros());
        assert_eq!(
            a.fixed_view::<2, 2>(2, 0).into_owned(),
            k * build_system(&p).c
        );
        let sys = build_system(&p);
        assert_eq!(a.fixed_view::<2, 2>(2, 2).into_owned(), sys.a - k * sys.c);
    }

    #[test]
    fn beta_without_field_noise() {
        let p = PlantParams::constant_field(1e6, 1e6, 1e4).unwrap();
        let d = DesignParams::matched(&p, 1.0).unwrap();
        let dynamics = build_alpha_beta(
            &p,
            &d,
            GainSchedule::Constant(Vector2::new(2.0, 3.0)),
            RowVector2::new(1.0, 1.0),
            &[],
        )
        .unwrap();
        let b = dynamics.beta(0.0);
        let nonzero: Vec<(usize, usize)> = (0..4)
            .flat_map(|i| (0..4).map(move |j| (i, j)))
            .filter(|&(i, j)| b[(i, j)] != 0.0)
            .collect();
        assert_eq!(nonzero, vec![(2, 2), (3, 2)]);
    }

    #[test]
    fn gain_grid_must_match() {
        let p = fluctuating(1e6);
        let d = DesignParams::matched(&p, 0.0).unwrap();
        let gains = GainSchedule::Tabulated {
            t: vec![0.0, 1.0],
            k: vec![Vector2::zeros(); 2],
        };
        let err = build_alpha_beta(&p, &d, gains, RowVector2::zeros(), &[0.0, 0.5, 1.0]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn error_of_perfectly_correlated_moments() {
        let mut th = Matrix4::zeros();
        th[(1, 1)] = 0.7;
        th[(3, 3)] = 0.7;
        th[(1, 3)] = 0.7;
        th[(3, 1)] = 0.7;
        let tc = TotalCov {
            t: 0.0,
            theta: th,
            sigma_be: 0.0,
            sigma_ze: 0.0,
        };
        assert_eq!(magnetometry_error(&tc), 0.0);
        let prior = Priors::coherent(1e6, 0.4).unwrap();
        let tc0 = record(0.0, &to_error(&theta0(&prior))).unwrap();
        assert_eq!(magnetometry_error(&tc0), 0.4);
        assert_eq!(tc0.sigma_be, 0.4);
    }

    #[test]
    fn matched_total_covariance_reproduces_riccati() {
        let p = fluctuating(1e6);
        let prior = Priors::coherent(1e6, 1.0).unwrap();
        let d = DesignParams::matched(&p, 0.0).unwrap();
        let times = geometric_grid(1e-12, 5e-8, 40);
        let ric = integrate_estimator_riccati_on(&p, &prior, &times).unwrap();
        let rows = mismatch_covariance(&p, &prior, &d, &times, Propagation::Joint).unwrap();
        for (k, r) in rows.iter().enumerate() {
            assert!(
                (r.sigma_be / ric.sigma_b[k] - 1.0).abs() < 1e-6,
                "t={}",
                r.t
            );
        }
        let exact = mismatch_covariance(&p, &prior, &d, &times, Propagation::Exact).unwrap();
        let last = exact.last().unwrap().sigma_be / ric.sigma_b.last().unwrap();
        assert!((last - 1.0).abs() < 1e-3, "{last}");
    }

    #[test]
    fn disconnected_filter_matches_truth_moments() {
        let p = fluctuating(1e6);
        let prior = Priors::coherent(1e6, 0.5).unwrap();
        let d = DesignParams::matched(&p, 0.0).unwrap();
        let times: Vec<f64> = (0..=50).map(|k| k as f64 * 2e-7).collect();
        let dynamics = build_alpha_beta(
            &p,
            &d,
            GainSchedule::Constant(Vector2::zeros()),
            RowVector2::zeros(),
            &times,
        )
        .unwrap();
        let rows = integrate_theta_exact(&dynamics, &theta0(&prior), &times).unwrap();
        let (g, gb, sbf) = (p.gamma_j(), p.field_decay, p.field_diffusion);
        // Truth-only moments: d/dt [zz, zb, bb] = [2g zb, g bb - gb zb, sbf - 2 gb bb].
        let path = crate::numerics::ode_rk4(
            |_, x: &[f64], dx: &mut [f64]| {
                dx[0] = 2.0 * g * x[1];
                dx[1] = g * x[2] - gb * x[1];
                dx[2] = sbf - 2.0 * gb * x[2];
            },
            &[prior.sigma_z0, 0.0, prior.sigma_b0],
            0.0,
            1e-5,
            1e-9,
        )
        .unwrap();
        let want = path.last();
        let got = rows.last().unwrap().theta;
        assert!((got[(0, 0)] / want[0] - 1.0).abs() < 1e-8);
        assert!((got[(1, 1)] / want[2] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn exact_and_rk4_agree_on_piecewise_gains() {
        let p = fluctuating(2e6);
        let prior = Priors::coherent(2e6, 1.0).unwrap();
        let d = DesignParams::new(1e6, 0.2).unwrap();
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 5e-10).collect();
        let k: Vec<Vector2<f64>> = (0..40)
            .map(|i| Vector2::new(4e8 * (1.0 + 1.0 / (1.0 + i as f64)), 9e4))
            .collect();
        let dynamics = build_alpha_beta(
            &p,
            &d,
            GainSchedule::Piecewise {
                t: times.clone(),
                k,
            },
            design_controller_gain(&p, &d).unwrap(),
            &times,
        )
        .unwrap();
        let a = integrate_theta_exact(&dynamics, &theta0(&prior), &times).unwrap();
        let b = integrate_theta(&dynamics, &theta0(&prior), &times, 400).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x.sigma_be / y.sigma_be - 1.0).abs() < 1e-6, "t={}", x.t);
            assert!(is_psd4(&x.theta, 1e-9 * x.theta.abs().max()));
        }
    }

    #[test]
    fn factor_limits() {
        use MismatchRegime::*;
        for r in [ControlledSteady, ControlledTransient] {
            assert!((mismatch_factors(1.0, r).unwrap() - 1.0).abs() < 1e-15);
        }
        assert_eq!(mismatch_factors(1.0, UncontrolledFluctuating).unwrap(), 0.0);
        assert!((mismatch_factors(1e9, ControlledSteady).unwrap() - 0.5).abs() < 1e-8);
        assert!((mismatch_factors(1e9, ControlledTransient).unwrap() - 0.25).abs() < 1e-8);
        assert_eq!(mismatch_factors(3.0, UncontrolledFluctuating).unwrap(), 4.0);
        assert!(matches!(
            mismatch_factors(0.5, ControlledTransient),
            Err(Error::OutOfValidity(_))
        ));
    }

    #[test]
    fn controlled_transient_self_similar_limit() {
        // With z~ slaved by a fast controller, the late-time error dynamics are
        // self-similar and the t^-3 particular solution gives 1/(2f - 1). Near
        // f = 1 the homogeneous modes die out quickly, so the full propagation
        // must land on it.
        for f in [0.75, 1.25] {
            let p = PlantParams::constant_field(f * 1e6, 1e6, 1e4).unwrap();
            let prior = Priors::coherent(f * 1e6, 1.0).unwrap();
            let d = DesignParams::new(1e6, 1.0).unwrap();
            let times = geometric_grid(1e-14, 1e-5, 100);
            let rows = mismatch_covariance(&p, &prior, &d, &times, Propagation::Exact).unwrap();
            let reference = design_field_variance(&p, &prior, &d, &times).unwrap();
            let ratio = rows.last().unwrap().sigma_be / reference.last().unwrap();
            assert!(
                (ratio * (2.0 * f - 1.0) - 1.0).abs() < 2e-3,
                "f={f}: {ratio}"
            );
        }
    }
}
