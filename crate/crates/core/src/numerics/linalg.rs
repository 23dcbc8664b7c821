use nalgebra::{DMatrix, Matrix2};

use crate::error::{Error, Result};

/// Dynamically sized real matrix used for the block computations.
pub type Matrix = DMatrix<f64>;

// Pade(13) coefficients for the scaling-and-squaring exponential.
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring around a degree-13 Pade core.
pub fn mat_expm(a: &Matrix) -> Result<Matrix> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Dimension {
            op: "mat_expm",
            detail: format!("expected a square matrix, got {}x{}", n, a.ncols()),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalInstability {
            time: 0.0,
            detail: "mat_expm input has non-finite entries".into(),
        });
    }
    if n == 0 {
        return Ok(a.clone());
    }

    let norm1 = (0..n)
        .map(|j| a.column(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let squarings = if norm1 > THETA13 {
        (norm1 / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scaled = a / 2f64.powi(squarings);

    let b = &PADE13;
    let ident = Matrix::identity(n, n);
    let a2 = &scaled * &scaled;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;

    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9])
        + &a6 * b[7]
        + &a4 * b[5]
        + &a2 * b[3]
        + &ident * b[1];
    let u = &scaled * u_inner;
    let v = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8])
        + &a6 * b[6]
        + &a4 * b[4]
        + &a2 * b[2]
        + &ident * b[0];

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .ok_or(Error::Singular("Pade denominator in mat_expm"))?;
    for _ in 0..squarings {
        r = &r * &r;
    }
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalInstability {
            time: 0.0,
            detail: "mat_expm overflowed".into(),
        });
    }
    Ok(r)
}

pub fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    (m + m.transpose()) * 0.5
}

/// PSD test for a symmetric 2x2 matrix with absolute slack `tol`.
pub fn is_psd2(m: &Matrix2<f64>, tol: f64) -> bool {
    let (a, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    a >= -tol && d >= -tol && c * c <= a.max(0.0) * d.max(0.0) + tol * (a.abs() + d.abs() + tol)
}
