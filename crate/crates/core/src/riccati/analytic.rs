//! Closed-form constant-field covariance.
//!
//! Both entries are written in precision form (`p_z = 1/sigma_z0`,
//! `p_b = 1/sigma_b0`) so that infinite priors are ordinary inputs:
//!
//! ```text
//! den     = 12 sM^2 p_b p_z + 12 sM t p_b + g^2 t^3 (t + 4 sM p_z)
//! sigma_b = 12 sM (sM p_z + t) / den
//! sigma_z = 4 sM (g^2 t^3 + 3 sM (p_b + g^2 t^2 p_z)) / den
//! ```
//!
//! with `g = gamma J` and `sM = sigma_M`. A vanishing spin prior is handled
//! by the `p_z -> infinity` limit and a vanishing field prior by `p_b -> infinity`.

use crate::error::{Error, Result};
use crate::model::{PlantParams, Priors};

fn check(p: &PlantParams, t: f64) -> Result<()> {
    if !p.is_constant_field() {
        return Err(Error::Unsupported(
            "closed-form covariance needs a constant field (gamma_b = sigma_bF = 0)",
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::Config(format!("time must be >= 0, got {t}")));
    }
    Ok(())
}

/// Field variance `sigma_bR(t)` for a constant field.
pub fn analytic_sigma_b(p: &PlantParams, prior: &Priors, t: f64) -> Result<f64> {
    check(p, t)?;
    let (sz0, sb0) = (prior.sigma_z0, prior.sigma_b0);
    if t == 0.0 || sb0 == 0.0 {
        return Ok(sb0);
    }
    let sm = p.sigma_m();
    let g2 = p.gamma_j().powi(2);
    let pb = 1.0 / sb0;
    if sz0 == 0.0 {
        return Ok(3.0 * sm / (3.0 * sm * pb + g2 * t.powi(3)));
    }
    let pz = 1.0 / sz0;
    let den = 12.0 * sm * sm * pb * pz + 12.0 * sm * t * pb + g2 * t.powi(3) * (t + 4.0 * sm * pz);
    Ok(12.0 * sm * (sm * pz + t) / den)
}

/// Spin variance `sigma_zR(t)` for a constant field.
pub fn analytic_sigma_z(p: &PlantParams, prior: &Priors, t: f64) -> Result<f64> {
    check(p, t)?;
    let (sz0, sb0) = (prior.sigma_z0, prior.sigma_b0);
    if t == 0.0 {
        return Ok(sz0);
    }
    let sm = p.sigma_m();
    if sb0 == 0.0 {
        return Ok(sz0 * sm / (sm + sz0 * t));
    }
    let g2 = p.gamma_j().powi(2);
    let pb = 1.0 / sb0;
    if sz0 == 0.0 {
        return Ok(3.0 * sm * g2 * t * t / (3.0 * sm * pb + g2 * t.powi(3)));
    }
    let pz = 1.0 / sz0;
    let den = 12.0 * sm * sm * pb * pz + 12.0 * sm * t * pb + g2 * t.powi(3) * (t + 4.0 * sm * pz);
    Ok(4.0 * sm * (g2 * t.powi(3) + 3.0 * sm * (pb + g2 * t * t * pz)) / den)
}
