//! Truth model: Ornstein-Uhlenbeck field, integrating spin and the white-noise
//! photocurrent record.
//!
//! Step `k` covers `[t_k, t_k + dt)`. The stored state is the value at `t_k`
//! and `ydt[k]` is the record increment over the step:
//!
//! ```text
//! b[k+1]  = b[k] - gamma_b b[k] dt + sqrt(sigma_bF) dW1[k]
//! z[k+1]  = z[k] + gamma J (b[k] + u[k]) dt
//! ydt[k]  = z[k] dt + sqrt(sigma_M) dW2[k]
//! ```

use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{PlantParams, Priors};
use crate::numerics::RngStream;
use crate::output::write_columns;

/// A simulated run sampled on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub z: Vec<f64>,
    pub b: Vec<f64>,
    pub u: Vec<f64>,
    pub ydt: Vec<f64>,
    /// Measurement Wiener increments `dW2[k]` (already scaled by `sqrt(dt)`).
    pub dw_meas: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_columns(
            out,
            &["t", "z", "b", "u", "ydt"],
            &[&self.t, &self.z, &self.b, &self.u, &self.ydt],
        )
    }
}

/// Number of steps covering `[0, t_end)` with step `dt`.
pub fn step_count(dt: f64, t_end: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end > 0.0 && dt.is_finite() && t_end.is_finite()) {
        return Err(Error::Config(format!(
            "need dt > 0 and T > 0 (dt = {dt}, T = {t_end})"
        )));
    }
    Ok(((t_end / dt).round() as usize).max(1))
}

fn warn_validity(p: &PlantParams, t_end: f64) {
    if t_end > 1.0 / p.measurement_rate {
        log::warn!(
            "T = {t_end:e} s exceeds 1/M = {:e} s; the Gaussian spin model is not valid there",
            1.0 / p.measurement_rate
        );
    }
}

/// Field samples `b[0..n]` with `b(0) ~ N(0, sigma_b0)`.
pub fn simulate_field(
    p: &PlantParams,
    prior: &Priors,
    rng: &mut RngStream,
    dt: f64,
    t_end: f64,
) -> Result<Vec<f64>> {
    let n = step_count(dt, t_end)?;
    if p.field_decay * dt >= 0.1 {
        return Err(Error::Config(format!(
            "gamma_b * dt = {:.3e} must stay below 0.1",
            p.field_decay * dt
        )));
    }
    let diffusion = p.field_diffusion.sqrt();
    let mut b = Vec::with_capacity(n);
    let mut x = prior.sigma_b0.sqrt() * rng.normal();
    for _ in 0..n {
        b.push(x);
        x += -p.field_decay * x * dt + diffusion * rng.wiener(dt);
    }
    Ok(b)
}

/// Deterministic core of the plant simulation: all randomness is supplied.
///
/// `control(k, t_k, ydt[..k])` returns `u[k]`; it sees only the increments
/// recorded before step `k`.
pub fn simulate_plant_from_draws<F>(
    p: &PlantParams,
    z0: f64,
    field: &[f64],
    dw_meas: &[f64],
    dt: f64,
    mut control: F,
) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &[f64]) -> f64,
{
    let n = field.len();
    if dw_meas.len() != n {
        return Err(Error::Dimension {
            op: "simulate_plant",
            detail: format!(
                "{} field samples but {} measurement draws",
                n,
                dw_meas.len()
            ),
        });
    }
    let g = p.gamma_j();
    let noise = p.sigma_m().sqrt();
    let mut tr = Trajectory {
        dt,
        t: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
        b: field.to_vec(),
        u: Vec::with_capacity(n),
        ydt: Vec::with_capacity(n),
        dw_meas: dw_meas.to_vec(),
    };
    let mut z = z0;
    for k in 0..n {
        let t = k as f64 * dt;
        let u = control(k, t, &tr.ydt);
        if !u.is_finite() {
            return Err(Error::ControllerFault { time: t });
        }
        tr.t.push(t);
        tr.z.push(z);
        tr.u.push(u);
        tr.ydt.push(z * dt + noise * dw_meas[k]);
        z += g * (field[k] + u) * dt;
    }
    Ok(tr)
}

/// Simulate the plant driven by `field` under a causal controller.
pub fn simulate_plant<F>(
    p: &PlantParams,
    prior: &Priors,
    field: &[f64],
    control: F,
    rng: &mut RngStream,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &[f64]) -> f64,
{
    let n = step_count(dt, t_end)?;
    if field.len() != n {
        return Err(Error::Dimension {
            op: "simulate_plant",
            detail: format!("field has {} samples, grid has {n}", field.len()),
        });
    }
    warn_validity(p, t_end);
    let z0 = prior.sigma_z0.sqrt() * rng.normal();
    let dw: Vec<f64> = (0..n).map(|_| rng.wiener(dt)).collect();
    simulate_plant_from_draws(p, z0, field, &dw, dt, control)
}

/// Field then plant from one stream.
pub fn simulate<F>(
    p: &PlantParams,
    prior: &Priors,
    control: F,
    rng: &mut RngStream,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory>
where
    F: FnMut(usize, f64, &[f64]) -> f64,
{
    let field = simulate_field(p, prior, rng, dt, t_end)?;
    simulate_plant(p, prior, &field, control, rng, dt, t_end)
}
