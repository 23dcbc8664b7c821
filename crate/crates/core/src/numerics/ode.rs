use super::linalg::Matrix;
use crate::error::{Error, Result};

/// Sampled solution of an ODE: `x[k]` is the state at `t[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdePath {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
}

impl OdePath {
    pub fn last(&self) -> &[f64] {
        self.x.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// One classical RK4 step of `x' = f(t, x)` written into `out`.
pub fn rk4_step<F>(f: &mut F, t: f64, x: &[f64], h: f64, out: &mut [f64])
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = x.len();
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    f(t, x, &mut k1);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k1[i];
    }
    f(t + 0.5 * h, &tmp, &mut k2);
    for i in 0..n {
        tmp[i] = x[i] + 0.5 * h * k2[i];
    }
    f(t + 0.5 * h, &tmp, &mut k3);
    for i in 0..n {
        tmp[i] = x[i] + h * k3[i];
    }
    f(t + h, &tmp, &mut k4);
    for i in 0..n {
        out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

/// Fixed-step RK4 from `t0` to `t1`; the last step is shortened to land on `t1`.
pub fn ode_rk4<F>(mut f: F, x0: &[f64], t0: f64, t1: f64, dt: f64) -> Result<OdePath>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(dt > 0.0) || !(t1 > t0) {
        return Err(Error::Config(format!(
            "ode_rk4 needs dt > 0 and t1 > t0 (dt = {dt}, t0 = {t0}, t1 = {t1})"
        )));
    }
    let steps = ((t1 - t0) / dt).ceil() as usize;
    let mut path = OdePath {
        t: Vec::with_capacity(steps + 1),
        x: Vec::with_capacity(steps + 1),
    };
    path.t.push(t0);
    path.x.push(x0.to_vec());
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let t_next = if k + 1 == steps {
            t1
        } else {
            t0 + (k + 1) as f64 * dt
        };
        rk4_step(&mut f, t, &x, t_next - t, &mut next);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: t_next });
        }
        std::mem::swap(&mut x, &mut next);
        path.t.push(t_next);
        path.x.push(x.clone());
    }
    Ok(path)
}

/// RK4 through an arbitrary increasing list of output times, taking `substeps`
/// equal steps inside each interval.
pub fn ode_rk4_through<F>(mut f: F, x0: &[f64], times: &[f64], substeps: usize) -> Result<OdePath>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if times.is_empty() || substeps == 0 {
        return Err(Error::Config(
            "ode_rk4_through needs times and substeps >= 1".into(),
        ));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config(
            "output times must be strictly increasing".into(),
        ));
    }
    let mut path = OdePath {
        t: vec![times[0]],
        x: vec![x0.to_vec()],
    };
    let mut x = x0.to_vec();
    let mut next = vec![0.0; x.len()];
    for w in times.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for s in 0..substeps {
            let t = w[0] + s as f64 * h;
            rk4_step(&mut f, t, &x, h, &mut next);
            std::mem::swap(&mut x, &mut next);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { time: w[1] });
        }
        path.t.push(w[1]);
        path.x.push(x.clone());
    }
    Ok(path)
}

/// `[0, t_first, ..., t_end]` with `per_decade` log-spaced points per decade.
pub fn geometric_grid(t_first: f64, t_end: f64, per_decade: usize) -> Vec<f64> {
    assert!(t_first > 0.0 && t_end > t_first && per_decade > 0);
    let decades = (t_end / t_first).log10();
    let n = (decades * per_decade as f64).ceil().max(1.0) as usize;
    let mut grid = Vec::with_capacity(n + 2);
    grid.push(0.0);
    for k in 0..=n {
        let t = t_first * 10f64.powf(decades * k as f64 / n as f64);
        grid.push(t);
    }
    *grid.last_mut().unwrap() = t_end;
    grid
}

/// `x + drift * dt + diffusion * dw`, where `dw` already carries the `sqrt(dt)`.
pub fn euler_maruyama_step(
    x: &[f64],
    drift: &[f64],
    diffusion: &Matrix,
    dt: f64,
    dw: &[f64],
) -> Result<Vec<f64>> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!(
            "euler_maruyama_step needs dt > 0, got {dt}"
        )));
    }
    if drift.len() != x.len() || diffusion.nrows() != x.len() || diffusion.ncols() != dw.len() {
        return Err(Error::Dimension {
            op: "euler_maruyama_step",
            detail: format!(
                "state {}, drift {}, diffusion {}x{}, noise {}",
                x.len(),
                drift.len(),
                diffusion.nrows(),
                diffusion.ncols(),
                dw.len()
            ),
        });
    }
    Ok((0..x.len())
        .map(|i| {
            let noise: f64 = (0..dw.len()).map(|j| diffusion[(i, j)] * dw[j]).sum();
            x[i] + drift[i] * dt + noise
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;

    #[test]
    fn zero_field_is_constant() {
        let p = ode_rk4(|_, _, dx| dx.fill(0.0), &[1.0, -2.0], 0.0, 3.0, 0.1).unwrap();
        assert!(p.x.iter().all(|x| x == &[1.0, -2.0]));
        assert_eq!(*p.t.last().unwrap(), 3.0);
    }

    #[test]
    fn linear_decay() {
        let p = ode_rk4(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 1.0, 0.01).unwrap();
        assert!((p.last()[0] - (-1.0f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn quadrature_of_cosine() {
        let p = ode_rk4(|t, _, dx| dx[0] = t.cos(), &[0.0], 0.0, 2.0, 0.01).unwrap();
        for (t, x) in p.t.iter().zip(&p.x) {
            assert!((x[0] - t.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn last_step_lands_on_t1() {
        let p = ode_rk4(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 1.0, 0.3).unwrap();
        assert_eq!(p.t.len(), 5);
        assert_eq!(*p.t.last().unwrap(), 1.0);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |dt: f64| {
            let p = ode_rk4(|_, x, dx| dx[0] = -x[0], &[1.0], 0.0, 1.0, dt).unwrap();
            (p.last()[0] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!(ratio >= 8.0, "ratio {ratio}");
    }

    #[test]
    fn divergence_is_reported_with_time() {
        let err = ode_rk4(|_, x, dx| dx[0] = x[0] * x[0], &[1.0], 0.0, 2.0, 0.1).unwrap_err();
        match err {
            Error::Divergence { time } => assert!(time > 0.9 && time <= 2.0, "{time}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn through_matches_uniform() {
        let grid = [0.0, 0.25, 0.5, 1.0];
        let p = ode_rk4_through(|_, x, dx| dx[0] = -x[0], &[1.0], &grid, 50).unwrap();
        for (t, x) in p.t.iter().zip(&p.x) {
            assert!((x[0] - (-t).exp()).abs() < 1e-10);
        }
    }

    #[test]
    fn geometric_grid_endpoints() {
        let g = geometric_grid(1e-9, 1e-4, 10);
        assert_eq!(g[0], 0.0);
        assert!((g[1] - 1e-9).abs() < 1e-24);
        assert_eq!(*g.last().unwrap(), 1e-4);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn em_deterministic_cases() {
        let zero = Matrix::zeros(2, 2);
        let x = euler_maruyama_step(&[1.0, 2.0], &[0.0, 0.0], &zero, 0.1, &[0.3, -0.2]).unwrap();
        assert_eq!(x, vec![1.0, 2.0]);
        let x = euler_maruyama_step(&[1.0, 2.0], &[1.0, 0.0], &zero, 0.1, &[0.0, 0.0]).unwrap();
        assert!((x[0] - 1.1).abs() < 1e-15 && x[1] == 2.0);
    }

    #[test]
    fn em_dimension_mismatch() {
        let d = Matrix::identity(2, 2);
        assert!(matches!(
            euler_maruyama_step(&[0.0, 0.0], &[0.0, 0.0], &d, 0.1, &[0.0]),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn em_brownian_variance_grows_linearly() {
        // Var[x(T)] = T for unit diffusion; 3-sigma band of the sample variance.
        let paths = 10_000;
        let (dt, steps) = (0.01, 100);
        let horizon = dt * steps as f64;
        let d = Matrix::identity(1, 1);
        let mut sum2 = 0.0;
        for k in 0..paths {
            let mut rng = RngStream::for_trial(7, k as u64);
            let mut x = vec![0.0];
            for _ in 0..steps {
                x = euler_maruyama_step(&x, &[0.0], &d, dt, &[rng.wiener(dt)]).unwrap();
            }
            sum2 += x[0] * x[0];
        }
        let var = sum2 / paths as f64;
        let band = 3.0 * horizon * (2.0 / paths as f64).sqrt();
        assert!((var - horizon).abs() < band, "var {var}");
    }
}
