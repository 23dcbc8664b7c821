//! Steady-state transfer functions, Bode data, characteristic frequencies and
//! robust loop shaping.

mod design;
mod tf;

use std::io::Write;

use num_complex::Complex64;

pub use design::{
    design_robust_controller, is_closed_loop_stable, performance_weight, sensitivity_norm,
    RobustDesign, SensitivityPeak,
};
pub use tf::{poly_eval, poly_roots, RationalTF, ROOT_MATCH_TOL};

use crate::error::{Error, Result};
use crate::model::{DesignParams, PlantParams};
use crate::output::fmt_f64;
use crate::riccati::steady_state_gains;

/// Required margin on both large-gain approximation inequalities.
pub const REGIME_MARGIN: f64 = 100.0;

/// Photocurrent-to-estimate and photocurrent-to-control transfer functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClosedLoopTfs {
    pub g_z: RationalTF,
    pub g_b: RationalTF,
    pub g_u: RationalTF,
}

/// Large-gain limit frequencies (rad/s) and gains of `G_u`, with the closing
/// frequency found by bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFreqs {
    pub omega_l: f64,
    pub omega_h: f64,
    pub omega_c: f64,
    pub omega_q: f64,
    pub g_u_dc: f64,
    pub g_u_ac: f64,
    /// `|P(j w) G_u(j w)| = 1` solved on the exact `G_u`.
    pub omega_c_closure: f64,
}

impl CharFreqs {
    pub fn closure_ratio(&self) -> f64 {
        self.omega_c_closure / self.omega_h
    }
}

/// Resolvent of the steady closed loop `F = A' - B' K_C - K_O C`, worked out
/// symbolically for the two-state plant.
pub fn closed_loop_tfs(p: &PlantParams, d: &DesignParams) -> Result<ClosedLoopTfs> {
    let gains = steady_state_gains(p, d)?;
    let design = d.assumed_plant(p)?;
    let g = design.gamma_j();
    let gb = design.field_decay;
    let (k1, k2) = (gains.k_o[0], gains.k_o[1]);
    let (c1, c2) = (gains.k_c[0], gains.k_c[1]);

    let a = g * c1 + k1;
    let f12 = g * (1.0 - c2);
    let den = vec![a * gb + f12 * k2, a + gb, 1.0];
    let nz = vec![gb * k1 + f12 * k2, k1];
    let nb = vec![k2 * g * c1, k2];
    let nu = vec![-(c1 * nz[0] + c2 * nb[0]), -(c1 * nz[1] + c2 * nb[1])];
    Ok(ClosedLoopTfs {
        g_z: RationalTF::new(nz, den.clone())?,
        g_b: RationalTF::new(nb, den.clone())?,
        g_u: RationalTF::new(nu, den)?,
    })
}

/// One Bode sample; `flagged` marks a pole on or numerically at `j omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodePoint {
    pub omega: f64,
    pub mag_db: f64,
    pub phase_deg: f64,
    pub flagged: bool,
}

/// Magnitude in dB and unwrapped phase in degrees on a positive sorted grid.
pub fn bode(tf: &RationalTF, omega: &[f64]) -> Result<Vec<BodePoint>> {
    if omega.iter().any(|&w| !(w > 0.0)) || omega.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(
            "Bode grid must be positive and increasing".into(),
        ));
    }
    let mut out = Vec::with_capacity(omega.len());
    let mut prev: Option<f64> = None;
    for &w in omega {
        if tf.pole_at(w) {
            out.push(BodePoint {
                omega: w,
                mag_db: f64::INFINITY,
                phase_deg: f64::NAN,
                flagged: true,
            });
            continue;
        }
        let v = tf.eval_jw(w);
        let mut ph = v.arg().to_degrees();
        if let Some(p) = prev {
            ph -= 360.0 * ((ph - p) / 360.0).round();
        }
        prev = Some(ph);
        out.push(BodePoint {
            omega: w,
            mag_db: 20.0 * v.norm().log10(),
            phase_deg: ph,
            flagged: false,
        });
    }
    Ok(out)
}

/// `n` points log-spaced over `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Highest frequency where `|gamma J / (j w) * G(j w)|` falls through one,
/// bracketed on a log grid over `[lo, hi]` and refined by bisection in
/// `log w`.
pub fn closing_frequency(g: &RationalTF, gamma_j: f64, lo: f64, hi: f64) -> Result<f64> {
    let loop_mag = |w: f64| (gamma_j / w * g.eval_jw(w).norm()).ln();
    let grid = log_grid(lo, hi, 2000);
    let k = (1..grid.len())
        .rev()
        .find(|&k| loop_mag(grid[k - 1]) > 0.0 && loop_mag(grid[k]) <= 0.0)
        .ok_or(Error::SolverFailure(
            "loop gain does not cross 0 dB on the grid",
        ))?;
    let (mut a, mut b) = (grid[k - 1].ln(), grid[k].ln());
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if loop_mag(m.exp()) > 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Checks the two large-gain inequalities with [`REGIME_MARGIN`].
pub fn check_regime(p: &PlantParams, d: &DesignParams) -> Result<()> {
    let design = d.assumed_plant(p)?;
    let g = design.gamma_j();
    let r = (design.field_diffusion / design.sigma_m()).sqrt();
    let lhs1 = d.lambda * d.lambda;
    let rhs1 = (r / (2.0 * g)).sqrt();
    if lhs1 < REGIME_MARGIN * rhs1 {
        return Err(Error::OutOfRegime(format!(
            "lambda^2 >> sqrt(sqrt(sigma_bF/sigma_M)/(2 gamma J)) fails: {lhs1:e} vs {rhs1:e}"
        )));
    }
    let rhs2 = design.field_decay.powi(2) / r;
    if g < REGIME_MARGIN * rhs2 {
        return Err(Error::OutOfRegime(format!(
            "gamma J >> gamma_b^2 sqrt(sigma_M/sigma_bF) fails: {g:e} vs {rhs2:e}"
        )));
    }
    Ok(())
}

/// Limit frequencies and gains of `G_u` for design `d`.
pub fn char_freqs(p: &PlantParams, d: &DesignParams) -> Result<CharFreqs> {
    check_regime(p, d)?;
    let design = d.assumed_plant(p)?;
    let g = design.gamma_j();
    let r = (design.field_diffusion / design.sigma_m()).sqrt();
    let omega_h = (0.5 * g * r).sqrt();
    let omega_l = design.field_decay;
    let omega_q = d.lambda * g;
    let tfs = closed_loop_tfs(p, d)?;
    let lo = omega_h * 1e-6;
    let hi = omega_q.max(omega_h) * 1e3;
    let omega_c_closure = closing_frequency(&tfs.g_u, g, lo, hi)?;
    Ok(CharFreqs {
        omega_l,
        omega_h,
        omega_c: 2.0 * omega_h,
        omega_q,
        g_u_dc: -r / design.field_decay,
        g_u_ac: -(2.0 * r / g).sqrt(),
        omega_c_closure,
    })
}

/// `G_uDC (1 + s/omega_H) / (1 + (1 + s/omega_Q) s/omega_L)`.
pub fn shape_template(cf: &CharFreqs, s: Complex64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    cf.g_u_dc * (one + s / cf.omega_h) / (one + (one + s / cf.omega_q) * s / cf.omega_l)
}

/// Bode CSV: `omega` then `mag_db_<name>, phase_deg_<name>` per transfer
/// function.
pub fn write_bode_csv<W: Write>(out: W, omega: &[f64], tfs: &[(&str, &RationalTF)]) -> Result<()> {
    let mut headers = vec!["omega".to_string()];
    let mut cols: Vec<Vec<f64>> = vec![omega.to_vec()];
    for (name, tf) in tfs {
        let pts = bode(tf, omega)?;
        headers.push(format!("mag_db_{name}"));
        headers.push(format!("phase_deg_{name}"));
        cols.push(pts.iter().map(|p| p.mag_db).collect());
        cols.push(pts.iter().map(|p| p.phase_deg).collect());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&headers)?;
    for i in 0..omega.len() {
        w.write_record(cols.iter().map(|c| fmt_f64(c[i])))?;
    }
    w.flush()?;
    Ok(())
}
