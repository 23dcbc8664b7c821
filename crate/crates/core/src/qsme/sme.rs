//! Euler integration of the conditional master equation
//! `d rho = -i[H(h), rho] dt + D[sqrt(M) J_z] rho dt + sqrt(eta) H[sqrt(M) J_z] rho dW`
//! with `H(h) = gamma h J_y` and photocurrent `y dt = <J_z> dt + sqrt(sigma_M) dW`.

use nalgebra::Cholesky;
use num_complex::Complex64;

use super::spin::{CMatrix, QuantumState, SpinOperators};
use crate::error::{Error, Result};
use crate::model::PlantParams;

/// Bound on `dt (M + gamma |h|) (2J + 1)` accepted by [`sme_step`].
pub const SME_STEP_LIMIT: f64 = 0.05;

/// Most negative eigenvalue tolerated after a step.
pub const POSITIVITY_TOL: f64 = 1e-6;

/// Parameters the master equation needs. Unlike [`PlantParams`], `eta = 0`
/// and `M = 0` are allowed here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmeParams {
    pub gyro: f64,
    pub measurement_rate: f64,
    pub efficiency: f64,
}

impl SmeParams {
    pub fn new(gyro: f64, measurement_rate: f64, efficiency: f64) -> Result<Self> {
        if !(measurement_rate >= 0.0) || !measurement_rate.is_finite() {
            return Err(Error::InvalidParameter {
                name: "M",
                value: measurement_rate,
                reason: "must be >= 0",
            });
        }
        if !(0.0..=1.0).contains(&efficiency) {
            return Err(Error::InvalidParameter {
                name: "eta",
                value: efficiency,
                reason: "must lie in [0, 1]",
            });
        }
        if !gyro.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                value: gyro,
                reason: "must be finite",
            });
        }
        Ok(Self {
            gyro,
            measurement_rate,
            efficiency,
        })
    }

    /// `1/(4 M eta)`, or `None` when the record carries no information.
    pub fn sigma_m(&self) -> Option<f64> {
        let k = 4.0 * self.measurement_rate * self.efficiency;
        (k > 0.0).then(|| 1.0 / k)
    }
}

impl From<&PlantParams> for SmeParams {
    fn from(p: &PlantParams) -> Self {
        Self {
            gyro: p.gyro,
            measurement_rate: p.measurement_rate,
            efficiency: p.efficiency,
        }
    }
}

/// One Euler step at total field `h = b + u` driven by the innovation
/// increment `dw` (variance `dt`). Returns the renormalized state and the
/// photocurrent increment, `None` when `M eta = 0`.
///
/// The step is written in Kraus form,
/// `rho' = K rho K^dag + (1 - eta) c rho c^dag dt` with
/// `K = I - (i H + c^dag c / 2) dt + sqrt(eta) c (dw + 2 sqrt(eta M) <J_z> dt)`
/// and `c = sqrt(M) J_z`, followed by trace renormalization. Expanding the
/// product reproduces the Ito Euler increment of the master equation at
/// order `dt`, and the result stays positive semidefinite.
pub fn sme_step(
    state: &QuantumState,
    h: f64,
    ops: &SpinOperators,
    p: &SmeParams,
    dt: f64,
    dw: f64,
) -> Result<(QuantumState, Option<f64>)> {
    let n = ops.dim();
    let load = dt * (p.measurement_rate + p.gyro.abs() * h.abs()) * n as f64;
    if load > SME_STEP_LIMIT {
        return Err(Error::StepSize(format!(
            "dt (M + gamma|h|)(2J+1) = {load:.3e} exceeds {SME_STEP_LIMIT}"
        )));
    }
    let rho = &state.rho;
    let mean = state.mean_jz(ops);
    let m = &ops.m;
    let rate = p.measurement_rate;
    let eta = p.efficiency;
    let dy = dw + 2.0 * (eta * rate).sqrt() * mean * dt;
    let gain = (eta * rate).sqrt() * dy;

    let rot = Complex64::new(0.0, -p.gyro * h * dt);
    let mut k = ops.jy.map(|z| z * rot);
    for i in 0..n {
        k[(i, i)] += 1.0 - 0.5 * rate * m[i] * m[i] * dt + gain * m[i];
    }
    let mut next = &k * rho * k.adjoint();
    let lost = (1.0 - eta) * rate * dt;
    if lost > 0.0 {
        for i in 0..n {
            for j in 0..n {
                next[(i, j)] += rho[(i, j)] * (lost * m[i] * m[j]);
            }
        }
    }
    next = (&next + next.adjoint()).map(|z| z * 0.5);
    let tr = next.trace().re;
    if !(tr > 0.0) || !tr.is_finite() {
        return Err(Error::StepSize(format!("trace collapsed to {tr:e}")));
    }
    next /= Complex64::new(tr, 0.0);

    let shifted = &next + CMatrix::identity(n, n) * Complex64::new(POSITIVITY_TOL, 0.0);
    if Cholesky::new(shifted).is_none() {
        return Err(Error::StepSize(format!(
            "density matrix lost positivity beyond -{POSITIVITY_TOL:e}; reduce dt"
        )));
    }
    let ydt = p.sigma_m().map(|sm| mean * dt + sm.sqrt() * dw);
    Ok((QuantumState { rho: next }, ydt))
}

/// Innovation increment implied by a recorded photocurrent for a filter whose
/// current prediction is `mean`.
pub fn innovation(ydt: f64, mean: f64, p: &SmeParams, dt: f64) -> f64 {
    2.0 * (p.measurement_rate * p.efficiency).sqrt() * (ydt - mean * dt)
}

#[cfg(test)]
mod tests {
    use super::super::spin::{coherent_state_x, spin_operators};
    use super::*;

    #[test]
    fn frozen_without_field_noise_or_measurement() {
        let ops = spin_operators(2.0).unwrap();
        let s = coherent_state_x(2.0).unwrap();
        let p = SmeParams::new(1.0, 0.0, 1.0).unwrap();
        let (next, ydt) = sme_step(&s, 0.0, &ops, &p, 1e-3, 0.0).unwrap();
        assert!((next.rho - &s.rho).camax() < 1e-15);
        assert!(ydt.is_none());
    }

    #[test]
    fn invariants_after_noisy_steps() {
        let ops = spin_operators(5.0).unwrap();
        let mut s = coherent_state_x(5.0).unwrap();
        let p = SmeParams::new(1.0, 1e4, 1.0).unwrap();
        let dt = 1e-8;
        let mut rng = crate::numerics::RngStream::new(3);
        for _ in 0..500 {
            let dw = rng.wiener(dt);
            s = sme_step(&s, 1e3, &ops, &p, dt, dw).unwrap().0;
        }
        assert!((s.trace() - 1.0).abs() < 1e-10);
        assert!(s.hermiticity_error() < 1e-10);
        assert!(s.min_eigenvalue() > -1e-8);
    }

    #[test]
    fn large_step_rejected() {
        let ops = spin_operators(10.0).unwrap();
        let s = coherent_state_x(10.0).unwrap();
        let p = SmeParams::new(1.0, 1e4, 1.0).unwrap();
        assert!(matches!(
            sme_step(&s, 0.0, &ops, &p, 1e-5, 0.0),
            Err(Error::StepSize(_))
        ));
    }

    #[test]
    fn field_rotates_jz_against_jx() {
        // -i[gamma h J_y, rho] gives d<J_z>/dt = -gamma h <J_x>.
        let ops = spin_operators(10.0).unwrap();
        let s = coherent_state_x(10.0).unwrap();
        let p = SmeParams::new(1.0, 0.0, 0.0).unwrap();
        let dt = 1e-7;
        let (next, _) = sme_step(&s, 1e3, &ops, &p, dt, 0.0).unwrap();
        let rate = next.mean_jz(&ops) / dt;
        assert!((rate + 1e3 * 10.0).abs() < 1e-3 * 1e4);
    }

    #[test]
    fn innovation_inverts_photocurrent() {
        let p = SmeParams::new(1.0, 1e4, 0.5).unwrap();
        let ydt = 0.3 * 1e-6 + p.sigma_m().unwrap().sqrt() * 2e-4;
        assert!((innovation(ydt, 0.3, &p, 1e-6) - 2e-4).abs() < 1e-15);
    }
}
