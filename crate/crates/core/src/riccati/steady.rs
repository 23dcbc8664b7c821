//! Steady-state observer and controller gains.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::model::{build_system, DesignParams, PlantParams, StateSpace};
use crate::numerics::rk4_step;

/// Required margin of `gamma J' / (gamma_b^2 sqrt(sigma_M / sigma_bF))` for the
/// large-spin approximations (`sigma_zS`, `sigma_bS` power laws, limit
/// frequencies) to be used.
pub const CLOSED_FORM_MARGIN: f64 = 100.0;

/// Steady-state gains and covariance of the designed estimator/controller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyGains {
    pub k_o: Vector2<f64>,
    pub k_c: RowVector2<f64>,
    pub sigma_zs: f64,
    pub sigma_cs: f64,
    pub sigma_bs: f64,
}

/// Exact stabilizing solution of the estimator algebraic Riccati equation for
/// the two-state plant, expressed through the observer gain.
pub(crate) fn observer_gain_for(sys: &StateSpace) -> Result<Vector2<f64>> {
    let g = sys.a[(0, 1)];
    let decay = -sys.a[(1, 1)];
    let diffusion = sys.sigma1[(1, 1)];
    if !(diffusion > 0.0) {
        return Err(Error::NoSteadyState(
            "estimator steady state needs sigma_bF > 0",
        ));
    }
    let r = (diffusion / sys.sigma2).sqrt();
    let k1 = (decay * decay + 2.0 * g * r).sqrt() - decay;
    let k2 = r - decay * k1 / g;
    Ok(Vector2::new(k1, k2))
}

pub(crate) fn steady_observer_gain(p: &PlantParams) -> Result<Vector2<f64>> {
    observer_gain_for(&build_system(p))
}

/// `gamma J' / (gamma_b^2 sqrt(sigma_M / sigma_bF))`; infinite when the field
/// does not decay.
pub fn closed_form_ratio(p: &PlantParams, d: &DesignParams) -> f64 {
    let g = p.gyro * d.spin;
    if p.field_decay == 0.0 {
        return f64::INFINITY;
    }
    g / (p.field_decay.powi(2) * (p.sigma_m() / p.field_diffusion).sqrt())
}

/// Steady observer gain, covariance and controller gain for design `d`.
///
/// The estimator solution is exact (no large-spin approximation); the
/// controller gain is the algebraic steady state of the control Riccati
/// equation, or zero when `lambda = 0`.
pub fn steady_state_gains(p: &PlantParams, d: &DesignParams) -> Result<SteadyGains> {
    let design = d.assumed_plant(p)?;
    let sys = build_system(&design);
    let k_o = observer_gain_for(&sys)?;
    let sm = sys.sigma2;
    let g = design.gamma_j();
    let k_c = if d.lambda > 0.0 {
        controller_riccati_steady(p, d)?
    } else {
        RowVector2::zeros()
    };
    Ok(SteadyGains {
        k_o,
        k_c,
        sigma_zs: sm * k_o[0],
        sigma_cs: sm * k_o[1],
        sigma_bs: sm * k_o[1] * (design.field_decay + k_o[0]) / g,
    })
}

/// Large-spin approximation `sqrt(2 gamma J') sigma_M^{3/4} sigma_bF^{1/4}`.
pub fn sigma_zs_approx(p: &PlantParams, d: &DesignParams) -> f64 {
    (2.0 * p.gyro * d.spin).sqrt() * p.sigma_m().powf(0.75) * p.field_diffusion.powf(0.25)
}

/// Large-spin approximation `sqrt(2 / gamma J') sigma_bF^{3/4} sigma_M^{1/4}`.
pub fn sigma_bs_approx(p: &PlantParams, d: &DesignParams) -> f64 {
    (2.0 / (p.gyro * d.spin)).sqrt() * p.field_diffusion.powf(0.75) * p.sigma_m().powf(0.25)
}

fn control_weights(d: &DesignParams) -> (f64, f64) {
    // Only p/q matters; fix q = 1.
    (d.lambda * d.lambda, 1.0)
}

fn control_rhs(sys: &StateSpace, weight: f64, q: f64, v: &Matrix2<f64>) -> Matrix2<f64> {
    let p = Matrix2::new(weight, 0.0, 0.0, 0.0);
    let vb = v * sys.b;
    p + sys.a.transpose() * v + v * sys.a - vb * vb.transpose() / q
}

/// Stabilizing steady state of the control Riccati equation, returned as the
/// gain `K_C = Q^{-1} B^T V`.
///
/// The `(1,1)` and `(1,2)` entries of the algebraic equation decouple from
/// `V_22`, so the gain is found exactly even when `gamma_b = 0` and `V_22`
/// has no steady state.
pub fn controller_riccati_steady(p: &PlantParams, d: &DesignParams) -> Result<RowVector2<f64>> {
    if !(d.lambda > 0.0) {
        return Err(Error::SolverFailure("controller Riccati needs lambda > 0"));
    }
    let design = d.assumed_plant(p)?;
    let sys = build_system(&design);
    let (weight, q) = control_weights(d);
    let g = sys.b[0];
    let decay = -sys.a[(1, 1)];
    let v1 = (weight * q).sqrt() / g;
    let v2 = g * v1 / (decay + g * g * v1 / q);
    let k = RowVector2::new(g * v1, g * v2) / q;
    if !(k[0].is_finite() && k[1].is_finite()) {
        return Err(Error::SolverFailure(
            "controller Riccati gain is not finite",
        ));
    }
    let check = control_rhs(&sys, weight, q, &Matrix2::new(v1, v2, v2, 0.0));
    let scale = weight.max(g * v1);
    if check[(0, 0)].abs() > 1e-9 * scale || check[(0, 1)].abs() > 1e-9 * scale {
        return Err(Error::SolverFailure(
            "controller Riccati residual too large",
        ));
    }
    Ok(k)
}

/// Reverse-time RK4 of the control Riccati equation from `V = 0` over
/// `horizon`, returning the gain at the end.
pub fn controller_riccati_reverse(
    p: &PlantParams,
    d: &DesignParams,
    horizon: f64,
    steps: usize,
) -> Result<RowVector2<f64>> {
    if !(d.lambda > 0.0) {
        return Err(Error::SolverFailure("controller Riccati needs lambda > 0"));
    }
    if steps == 0 || !(horizon > 0.0) {
        return Err(Error::Config(
            "reverse integration needs a positive horizon and steps".into(),
        ));
    }
    let sys = build_system(&d.assumed_plant(p)?);
    let (weight, q) = control_weights(d);
    let mut f = |_: f64, x: &[f64], dx: &mut [f64]| {
        let v = Matrix2::new(x[0], x[1], x[1], x[2]);
        let r = control_rhs(&sys, weight, q, &v);
        dx[0] = r[(0, 0)];
        dx[1] = 0.5 * (r[(0, 1)] + r[(1, 0)]);
        dx[2] = r[(1, 1)];
    };
    let h = horizon / steps as f64;
    let mut x = vec![0.0; 3];
    let mut next = vec![0.0; 3];
    for k in 0..steps {
        rk4_step(&mut f, k as f64 * h, &x, h, &mut next);
        std::mem::swap(&mut x, &mut next);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time: (k + 1) as f64 * h,
            });
        }
    }
    Ok(RowVector2::new(x[0], x[1]) * sys.b[0] / q)
}
