//! Real-coefficient rational transfer functions in `s`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative distance below which a numerator root and a denominator root are
/// treated as the same and cancelled.
pub const ROOT_MATCH_TOL: f64 = 1e-9;

/// `num(s) / den(s)`, coefficients in ascending powers of `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalTF {
    num: Vec<f64>,
    den: Vec<f64>,
}

fn trim(mut c: Vec<f64>) -> Vec<f64> {
    while c.len() > 1 && *c.last().unwrap() == 0.0 {
        c.pop();
    }
    if c.is_empty() {
        c.push(0.0);
    }
    c
}

pub fn poly_eval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &a| acc * s + a)
}

pub fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    trim(out)
}

pub fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let out = (0..n)
        .map(|i| a.get(i).copied().unwrap_or(0.0) + b.get(i).copied().unwrap_or(0.0))
        .collect();
    trim(out)
}

pub fn poly_scale(a: &[f64], k: f64) -> Vec<f64> {
    trim(a.iter().map(|x| x * k).collect())
}

/// Roots from the eigenvalues of the companion matrix.
pub fn poly_roots(c: &[f64]) -> Vec<Complex64> {
    let c = trim(c.to_vec());
    let n = c.len() - 1;
    if n == 0 {
        return Vec::new();
    }
    let lead = c[n];
    let comp = DMatrix::from_fn(n, n, |i, j| {
        if i == 0 {
            -c[n - 1 - j] / lead
        } else if i == j + 1 {
            1.0
        } else {
            0.0
        }
    });
    comp.complex_eigenvalues().iter().copied().collect()
}

/// Monic-times-`lead` polynomial with the given roots; imaginary parts of the
/// expanded coefficients are dropped.
fn poly_from_roots(lead: f64, roots: &[Complex64]) -> Vec<f64> {
    let mut c = vec![Complex64::new(lead, 0.0)];
    for &r in roots {
        let mut next = vec![Complex64::new(0.0, 0.0); c.len() + 1];
        for (i, &a) in c.iter().enumerate() {
            next[i + 1] += a;
            next[i] -= a * r;
        }
        c = next;
    }
    trim(c.iter().map(|z| z.re).collect())
}

fn same_root(a: Complex64, b: Complex64) -> bool {
    let scale = a.norm().max(b.norm());
    (a - b).norm() <= ROOT_MATCH_TOL * scale
}

impl RationalTF {
    /// Builds `num/den` and cancels common roots.
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        let num = trim(num);
        let den = trim(den);
        if den.iter().all(|&d| d == 0.0) {
            return Err(Error::Singular("transfer function denominator is zero"));
        }
        if num.iter().chain(&den).any(|x| !x.is_finite()) {
            return Err(Error::Config(
                "non-finite transfer function coefficient".into(),
            ));
        }
        Ok(Self::cancel(num, den))
    }

    pub fn gain(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![1.0],
        }
    }

    /// `k / s`.
    pub fn integrator(k: f64) -> Self {
        Self {
            num: vec![k],
            den: vec![0.0, 1.0],
        }
    }

    fn cancel(num: Vec<f64>, den: Vec<f64>) -> Self {
        if num.len() == 1 || den.len() == 1 || num.iter().all(|&x| x == 0.0) {
            return Self { num, den };
        }
        let mut zeros = poly_roots(&num);
        let mut poles = poly_roots(&den);
        let mut cancelled = false;
        let mut i = 0;
        while i < zeros.len() {
            if let Some(j) = poles.iter().position(|&p| same_root(p, zeros[i])) {
                poles.remove(j);
                zeros.remove(i);
                cancelled = true;
            } else {
                i += 1;
            }
        }
        if !cancelled {
            return Self { num, den };
        }
        Self {
            num: poly_from_roots(*num.last().unwrap(), &zeros),
            den: poly_from_roots(*den.last().unwrap(), &poles),
        }
    }

    pub fn num(&self) -> &[f64] {
        &self.num
    }

    pub fn den(&self) -> &[f64] {
        &self.den
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly_eval(&self.num, s) / poly_eval(&self.den, s)
    }

    pub fn eval_jw(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// True when `den(j omega)` vanishes to working precision.
    pub fn pole_at(&self, omega: f64) -> bool {
        let s = Complex64::new(0.0, omega);
        let scale: f64 = self
            .den
            .iter()
            .enumerate()
            .map(|(k, a)| a.abs() * omega.powi(k as i32))
            .sum();
        poly_eval(&self.den, s).norm() <= 1e-12 * scale
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        poly_roots(&self.num)
    }

    pub fn poles(&self) -> Vec<Complex64> {
        poly_roots(&self.den)
    }

    pub fn series(&self, other: &Self) -> Self {
        Self::cancel(
            poly_mul(&self.num, &other.num),
            poly_mul(&self.den, &other.den),
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            num: poly_scale(&self.num, k),
            den: self.den.clone(),
        }
    }

    /// `G / (1 + G)`.
    pub fn feedback_unity(&self) -> Self {
        Self::cancel(self.num.clone(), poly_add(&self.den, &self.num))
    }

    /// `1 / (1 + G)`.
    pub fn sensitivity(&self) -> Self {
        Self::cancel(self.den.clone(), poly_add(&self.den, &self.num))
    }

    pub fn dc_gain(&self) -> f64 {
        self.num[0] / self.den[0]
    }
}
