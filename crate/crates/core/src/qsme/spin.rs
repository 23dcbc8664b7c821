//! Angular-momentum operators and spin density matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Largest spin the dense oracle accepts.
pub const MAX_SPIN: f64 = 50.0;

/// `J_x, J_y, J_z` in the `|J, m>` basis ordered `m = J, J-1, ..., -J`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpinOperators {
    pub spin: f64,
    pub jx: CMatrix,
    pub jy: CMatrix,
    pub jz: CMatrix,
    /// Diagonal of `J_z`.
    pub m: Vec<f64>,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.m.len()
    }
}

fn check_spin(spin: f64) -> Result<usize> {
    let twice = 2.0 * spin;
    if !(spin > 0.0) || spin > MAX_SPIN || twice.fract() != 0.0 {
        return Err(Error::InvalidParameter {
            name: "J",
            value: spin,
            reason: "must be a positive half-integer no larger than 50",
        });
    }
    Ok(twice as usize + 1)
}

pub fn spin_operators(spin: f64) -> Result<SpinOperators> {
    let n = check_spin(spin)?;
    let m: Vec<f64> = (0..n).map(|k| spin - k as f64).collect();
    // <m+1| J+ |m> on the descending basis: entry (k-1, k).
    let mut jp = CMatrix::zeros(n, n);
    for k in 1..n {
        let mk = m[k];
        jp[(k - 1, k)] = Complex64::new((spin * (spin + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let jm = jp.adjoint();
    let jx = (&jp + &jm).map(|z| z * 0.5);
    let jy = (&jp - &jm).map(|z| z * Complex64::new(0.0, -0.5));
    let jz = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        m.iter().map(|&x| Complex64::new(x, 0.0)),
    ));
    Ok(SpinOperators {
        spin,
        jx,
        jy,
        jz,
        m,
    })
}

/// Density matrix of the spin.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub rho: CMatrix,
}

impl QuantumState {
    pub fn expect(&self, op: &CMatrix) -> f64 {
        (op * &self.rho).trace().re
    }

    /// `<J_z>` from the diagonal.
    pub fn mean_jz(&self, ops: &SpinOperators) -> f64 {
        ops.m
            .iter()
            .enumerate()
            .map(|(k, &m)| m * self.rho[(k, k)].re)
            .sum()
    }

    /// `<J_z^2> - <J_z>^2`.
    pub fn var_jz(&self, ops: &SpinOperators) -> f64 {
        let mean = self.mean_jz(ops);
        ops.m
            .iter()
            .enumerate()
            .map(|(k, &m)| (m - mean).powi(2) * self.rho[(k, k)].re)
            .sum()
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        (&self.rho - self.rho.adjoint()).camax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.rho
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |a, &b| a.min(b))
    }
}

/// Maximal-`J_x` eigenstate: amplitudes `2^-J sqrt(C(2J, J+m))`.
pub fn coherent_state_x(spin: f64) -> Result<QuantumState> {
    let n = check_spin(spin)?;
    let twice = n - 1;
    // C(2J, k) built up multiplicatively, then scaled by 2^-2J.
    let mut binom = vec![1.0f64; n];
    for k in 1..n {
        binom[k] = binom[k - 1] * (twice - k + 1) as f64 / k as f64;
    }
    let scale = 0.5f64.powi(twice as i32);
    let amp: Vec<Complex64> = binom
        .iter()
        .map(|c| Complex64::new((c * scale).sqrt(), 0.0))
        .collect();
    let rho = CMatrix::from_fn(n, n, |i, j| amp[i] * amp[j].conj());
    Ok(QuantumState { rho })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn comm(a: &CMatrix, b: &CMatrix) -> CMatrix {
        a * b - b * a
    }

    #[test]
    fn spin_half_is_pauli_over_two() {
        let ops = spin_operators(0.5).unwrap();
        assert_eq!(ops.m, vec![0.5, -0.5]);
        assert!((ops.jx[(0, 1)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn commutation_relations() {
        for j in [0.5, 1.0, 3.5, 10.0] {
            let o = spin_operators(j).unwrap();
            let i = Complex64::new(0.0, 1.0);
            assert!((comm(&o.jx, &o.jy) - o.jz.map(|z| z * i)).camax() < 1e-12);
            assert!((comm(&o.jy, &o.jz) - o.jx.map(|z| z * i)).camax() < 1e-12);
            assert!((comm(&o.jz, &o.jx) - o.jy.map(|z| z * i)).camax() < 1e-12);
            assert!(o.jz.trace().norm() < 1e-12);
        }
    }

    #[test]
    fn spin_one_eigenvalues() {
        assert_eq!(spin_operators(1.0).unwrap().m, vec![1.0, 0.0, -1.0]);
    }

    #[test]
    fn invalid_spin_rejected() {
        assert!(spin_operators(0.3).is_err());
        assert!(spin_operators(0.0).is_err());
        assert!(spin_operators(51.0).is_err());
    }

    #[test]
    fn coherent_state_moments() {
        for j in [0.5, 1.0, 10.0, 25.0] {
            let o = spin_operators(j).unwrap();
            let s = coherent_state_x(j).unwrap();
            assert!((s.trace() - 1.0).abs() < 1e-12);
            assert!((s.expect(&o.jx) - j).abs() < 1e-10);
            assert!(s.expect(&o.jy).abs() < 1e-10);
            assert!(s.mean_jz(&o).abs() < 1e-10);
            assert!((s.var_jz(&o) - j / 2.0).abs() < 1e-10);
        }
    }
}
