//! Gridded posterior over a constant field, one conditional state per grid
//! value, all filtering the same photocurrent record.

use super::sme::{innovation, sme_step, SmeParams};
use super::spin::{QuantumState, SpinOperators};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub b_values: Vec<f64>,
    pub p: Vec<f64>,
    pub rho_b: Vec<QuantumState>,
}

impl FieldGrid {
    /// Every hypothesis starts in `initial`; `weights` are normalized here.
    pub fn new(b_values: Vec<f64>, weights: Vec<f64>, initial: &QuantumState) -> Result<Self> {
        if b_values.is_empty() || b_values.len() != weights.len() {
            return Err(Error::Dimension {
                op: "FieldGrid::new",
                detail: format!("{} field values, {} weights", b_values.len(), weights.len()),
            });
        }
        if b_values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config(
                "grid field values must be strictly increasing".into(),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Config(
                "grid weights must be finite and nonnegative".into(),
            ));
        }
        let mut p = weights;
        normalize(&mut p)?;
        let rho_b = vec![initial.clone(); b_values.len()];
        Ok(Self { b_values, p, rho_b })
    }

    /// Uniform grid on `[-width, width]` with Gaussian prior weights of
    /// variance `sigma_b0`.
    pub fn gaussian(
        points: usize,
        width: f64,
        sigma_b0: f64,
        initial: &QuantumState,
    ) -> Result<Self> {
        if points < 2 {
            return Err(Error::Config("a field grid needs at least 2 points".into()));
        }
        let b: Vec<f64> = (0..points)
            .map(|k| -width + 2.0 * width * k as f64 / (points - 1) as f64)
            .collect();
        let w = b.iter().map(|x| (-0.5 * x * x / sigma_b0).exp()).collect();
        Self::new(b, w, initial)
    }

    pub fn mean(&self) -> f64 {
        self.b_values.iter().zip(&self.p).map(|(b, p)| b * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.b_values
            .iter()
            .zip(&self.p)
            .map(|(b, p)| (b - m).powi(2) * p)
            .sum()
    }

    /// Weight update then state propagation for one record increment, with
    /// control field `u` applied to every hypothesis.
    pub fn step(
        &mut self,
        ydt: f64,
        u: f64,
        ops: &SpinOperators,
        params: &SmeParams,
        dt: f64,
    ) -> Result<()> {
        let means: Vec<f64> = self.rho_b.iter().map(|r| r.mean_jz(ops)).collect();
        bayes_update_weights(&mut self.p, &means, ydt, params)?;
        for ((rho, &b), &mean) in self.rho_b.iter_mut().zip(&self.b_values).zip(&means) {
            let dw = innovation(ydt, mean, params, dt);
            *rho = sme_step(rho, b + u, ops, params, dt, dw)?.0;
        }
        Ok(())
    }
}

fn normalize(p: &mut [f64]) -> Result<()> {
    let total: f64 = p.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    p.iter_mut().for_each(|w| *w /= total);
    Ok(())
}

/// `p_b <- p_b (1 + 4 M eta <J_z>_b ydt)`, renormalized. Factors that the
/// Euler step would drive negative are clipped at zero.
fn bayes_update_weights(p: &mut [f64], means: &[f64], ydt: f64, params: &SmeParams) -> Result<()> {
    let k = 4.0 * params.measurement_rate * params.efficiency;
    for (w, &m) in p.iter_mut().zip(means) {
        *w *= (1.0 + k * m * ydt).max(0.0);
    }
    normalize(p)
}

/// Weight-only update of `grid` using the current `<J_z>_b` of its states.
pub fn bayes_grid_update(
    grid: &FieldGrid,
    ydt: f64,
    ops: &SpinOperators,
    params: &SmeParams,
) -> Result<FieldGrid> {
    let means: Vec<f64> = grid.rho_b.iter().map(|r| r.mean_jz(ops)).collect();
    let mut out = grid.clone();
    bayes_update_weights(&mut out.p, &means, ydt, params)?;
    Ok(out)
}
