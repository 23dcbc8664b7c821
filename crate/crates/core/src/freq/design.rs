//! Robust loop shaping for the integrator plant `P(s) = gamma J / s` with
//! `J` known only to lie in `[J_min, J_max]`.

use num_complex::Complex64;

use super::tf::{poly_add, poly_eval, poly_mul, RationalTF};
use crate::error::{Error, Result};

/// Synthesized controller and the frequencies that define it.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustDesign {
    pub c: RationalTF,
    pub w10: f64,
    pub omega_1: f64,
    pub omega_l: f64,
    pub omega_h: f64,
    pub omega_q: f64,
    /// Controller gain at the closing frequency, `omega_Q / (gamma J_max)`.
    pub gain_c: f64,
    pub j_min: f64,
    pub j_max: f64,
    pub gamma: f64,
}

impl RobustDesign {
    /// Closing frequency for spin `j`, `omega_H J / J_min`.
    pub fn omega_cr(&self, j: f64) -> f64 {
        self.omega_h * j / self.j_min
    }

    pub fn weight(&self) -> RationalTF {
        performance_weight(self.w10, self.omega_1)
    }
}

/// `W_1(s) = W_10 / (1 + s/omega_1)`.
pub fn performance_weight(w10: f64, omega_1: f64) -> RationalTF {
    RationalTF::new(vec![w10], vec![1.0, 1.0 / omega_1]).expect("finite weight")
}

/// Controller `|C|_C (omega_H/omega_L) (1 + s/omega_H) / ((1 + s/omega_L)(1 + s/omega_Q))`
/// with `omega_1 W_10 = omega_Q J_min / J_max` and `omega_H = omega_1 W_10`.
///
/// `omega_l = None` selects `omega_H / 100`.
pub fn design_robust_controller(
    j_min: f64,
    j_max: f64,
    omega_q: f64,
    omega_1: f64,
    omega_l: Option<f64>,
    gamma: f64,
) -> Result<RobustDesign> {
    for (name, v) in [
        ("J_min", j_min),
        ("J_max", j_max),
        ("omega_Q", omega_q),
        ("omega_1", omega_1),
        ("gamma", gamma),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::InvalidParameter {
                name,
                value: v,
                reason: "must be positive and finite",
            });
        }
    }
    if j_min > j_max {
        return Err(Error::InfeasibleDesign(format!(
            "J_min = {j_min} exceeds J_max = {j_max}"
        )));
    }
    let w10 = omega_q * j_min / (j_max * omega_1);
    let omega_h = omega_1 * w10;
    let omega_l = omega_l.unwrap_or(omega_h / 100.0);
    if !(omega_l > 0.0) {
        return Err(Error::InvalidParameter {
            name: "omega_L",
            value: omega_l,
            reason: "must be positive",
        });
    }
    if !(omega_l < omega_h) {
        return Err(Error::InfeasibleDesign(format!(
            "omega_L = {omega_l:e} must lie below omega_H = {omega_h:e}"
        )));
    }
    if !(omega_1 < omega_h) {
        return Err(Error::InfeasibleDesign(format!(
            "suppression W10 = {w10:e} must exceed 1 (omega_1 = {omega_1:e}, omega_H = {omega_h:e})"
        )));
    }
    if omega_h > omega_q {
        return Err(Error::InfeasibleDesign(format!(
            "omega_H = {omega_h:e} above roll-off omega_Q = {omega_q:e}"
        )));
    }
    let gain_c = omega_q / (gamma * j_max);
    let k = gain_c * omega_h / omega_l;
    let num = vec![k, k / omega_h];
    let den = poly_mul(&[1.0, 1.0 / omega_l], &[1.0, 1.0 / omega_q]);
    Ok(RobustDesign {
        c: RationalTF::new(num, den)?,
        w10,
        omega_1,
        omega_l,
        omega_h,
        omega_q,
        gain_c,
        j_min,
        j_max,
        gamma,
    })
}

/// Closed-loop characteristic polynomial `s den_C(s) + gamma J num_C(s)`.
fn characteristic(c: &RationalTF, gamma_j: f64) -> Vec<f64> {
    let sd = poly_mul(&[0.0, 1.0], c.den());
    let kn: Vec<f64> = c.num().iter().map(|x| x * gamma_j).collect();
    poly_add(&sd, &kn)
}

/// Fujiwara bound on root magnitudes.
fn root_bound(c: &[f64]) -> f64 {
    let n = c.len() - 1;
    let lead = c[n].abs();
    (1..=n)
        .map(|k| (c[n - k].abs() / lead).powf(1.0 / k as f64))
        .fold(0.0, f64::max)
        * 2.0
}

/// Argument-principle test on the closed-loop characteristic polynomial: all
/// roots lie in the open left half-plane iff the phase of `Delta(j w)` rises
/// monotonically by `n pi / 2` as `w` runs from 0 to infinity.
pub fn is_closed_loop_stable(c: &RationalTF, gamma_j: f64) -> bool {
    let delta = characteristic(c, gamma_j);
    let n = delta.len() - 1;
    if n == 0 {
        return true;
    }
    if delta[0] == 0.0 || delta.iter().any(|&a| a.signum() != delta[n].signum()) {
        return false;
    }
    let hi = root_bound(&delta);
    let rev: Vec<f64> = delta.iter().rev().copied().collect();
    let lo = 1.0 / root_bound(&rev);
    let decades = (hi / lo).log10() + 4.0;
    let steps = (decades * 400.0).ceil() as usize;
    let start = (lo / 100.0).log10();
    let mut prev = poly_eval(&delta, Complex64::new(0.0, 0.0)).arg();
    let mut total = 0.0;
    for i in 0..=steps {
        let w = 10f64.powf(start + decades * i as f64 / steps as f64);
        let v = poly_eval(&delta, Complex64::new(0.0, w));
        if v.norm() == 0.0 {
            return false;
        }
        let mut d = v.arg() - prev;
        d -= std::f64::consts::TAU * (d / std::f64::consts::TAU).round();
        if d < -1e-9 {
            return false;
        }
        total += d;
        prev = v.arg();
    }
    (total - n as f64 * std::f64::consts::FRAC_PI_2).abs() < std::f64::consts::FRAC_PI_4
}

/// Largest `|W_1 S|` found and where.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityPeak {
    pub value: f64,
    pub omega: f64,
}

/// `max |W_1(j w) S(j w)|` with `S = 1 / (1 + P C)`, `P = gamma J / s`, over
/// `omega_grid` and refined by golden-section search around the grid argmax.
pub fn sensitivity_norm(
    c: &RationalTF,
    j: f64,
    gamma: f64,
    w1: &RationalTF,
    omega_grid: &[f64],
) -> Result<SensitivityPeak> {
    if omega_grid.len() < 3 {
        return Err(Error::Config(
            "sensitivity grid needs at least 3 points".into(),
        ));
    }
    let gj = gamma * j;
    if !is_closed_loop_stable(c, gj) {
        return Err(Error::Unstable(format!(
            "closed loop with J = {j:e} has a right half-plane pole"
        )));
    }
    let f = |w: f64| {
        let s = Complex64::new(0.0, w);
        let l = c.eval(s) * gj / s;
        (w1.eval(s) / (l + 1.0)).norm()
    };
    let (k, _) =
        omega_grid
            .iter()
            .map(|&w| f(w))
            .enumerate()
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (i, v)| if v > acc.1 { (i, v) } else { acc },
            );
    let lo = omega_grid[k.saturating_sub(1)].ln();
    let hi = omega_grid[(k + 1).min(omega_grid.len() - 1)].ln();
    // Bracket in log omega, so the width is a relative frequency tolerance.
    let (a, b) = golden_max(|x| f(x.exp()), lo, hi, 1e-3);
    let refined = (0.5 * (a + b)).exp();
    let (value, omega) = if f(refined) >= f(omega_grid[k]) {
        (f(refined), refined)
    } else {
        (f(omega_grid[k]), omega_grid[k])
    };
    Ok(SensitivityPeak { value, omega })
}

/// Golden-section maximization on `[a, b]` down to a bracket of width `tol`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (a, b)
}
