//! Monte Carlo checks of the master-equation filter against the Gaussian
//! (Kalman) reduction.

use std::io::Write;

use nalgebra::{Matrix2, RowVector2, Vector2};

use super::bayes::FieldGrid;
use super::sme::{sme_step, SmeParams};
use super::spin::{coherent_state_x, spin_operators, QuantumState, SpinOperators};
use crate::ensemble::parallel_trials;
use crate::error::{Error, Result};
use crate::lqg_filter::{kalman_step, FilterState};
use crate::model::{Priors, StateSpace};
use crate::numerics::RngStream;
use crate::output::write_columns;
use crate::riccati::integrate_riccati_uniform;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub spin: f64,
    pub gyro: f64,
    pub measurement_rate: f64,
    /// Trajectories for the variance-tracking suite.
    pub trajectories: usize,
    /// Independent records for the two posterior suites.
    pub records: usize,
    pub seed: u64,
    pub workers: usize,
    /// `dt M (2J + 1)`.
    pub step_fraction: f64,
    pub grid_points: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            spin: 10.0,
            gyro: 1.0,
            measurement_rate: 1e4,
            trajectories: 200,
            records: 8,
            seed: 1,
            workers: 4,
            step_fraction: 5e-3,
            grid_points: 41,
        }
    }
}

impl OracleConfig {
    pub fn dt(&self) -> f64 {
        self.step_fraction / (self.measurement_rate * (2.0 * self.spin + 1.0))
    }

    fn params(&self, efficiency: f64) -> Result<SmeParams> {
        SmeParams::new(self.gyro, self.measurement_rate, efficiency)
    }
}

/// Sampled series of one suite, written as CSV columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSeries {
    pub headers: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl SuiteSeries {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let h: Vec<&str> = self.headers.iter().map(String::as_str).collect();
        let c: Vec<&[f64]> = self.columns.iter().map(Vec::as_slice).collect();
        write_columns(out, &h, &c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    /// Measured deviation statistic; see `detail` for its definition.
    pub statistic: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub detail: String,
    pub series: SuiteSeries,
}

fn steps_for(t_end: f64, dt: f64) -> usize {
    (t_end / dt).round() as usize
}

fn series(headers: &[&str], columns: Vec<Vec<f64>>) -> SuiteSeries {
    SuiteSeries {
        headers: headers.iter().map(|s| s.to_string()).collect(),
        columns,
    }
}

/// Unconditional evolution (`eta = 0`, `h = 0`): `<J_x>(t) = J exp(-M t / 2)`
/// up to `t = 1/M`.
pub fn jx_decay_suite(cfg: &OracleConfig) -> Result<SuiteReport> {
    let ops = spin_operators(cfg.spin)?;
    let p = cfg.params(0.0)?;
    let dt = cfg.dt();
    let t_end = 1.0 / cfg.measurement_rate;
    let n = steps_for(t_end, dt);
    let mut s = coherent_state_x(cfg.spin)?;
    let (mut t, mut jx, mut jz, mut dz2) =
        (vec![0.0], vec![cfg.spin], vec![0.0], vec![s.var_jz(&ops)]);
    let mut worst = 0.0f64;
    for k in 1..=n {
        s = sme_step(&s, 0.0, &ops, &p, dt, 0.0)?.0;
        let tk = k as f64 * dt;
        let x = s.expect(&ops.jx);
        let want = cfg.spin * (-0.5 * cfg.measurement_rate * tk).exp();
        worst = worst.max((x / want - 1.0).abs());
        t.push(tk);
        jx.push(x);
        jz.push(s.mean_jz(&ops));
        dz2.push(s.var_jz(&ops));
    }
    let tol = 0.01;
    Ok(SuiteReport {
        name: "jx_decay",
        statistic: worst,
        tolerance: tol,
        pass: worst <= tol,
        detail: format!(
            "max_t |<Jx>/(J exp(-Mt/2)) - 1| over t <= 1/M, J = {}",
            cfg.spin
        ),
        series: series(&["t", "Jx_mean", "Jz_mean", "dJz2"], vec![t, jx, jz, dz2]),
    })
}

/// `sigma_z0 sigma_M / (sigma_M + sigma_z0 t)` with `sigma_z0 = J/2`.
pub fn reduced_variance(spin: f64, sigma_m: f64, t: f64) -> f64 {
    let s0 = 0.5 * spin;
    s0 * sigma_m / (sigma_m + s0 * t)
}

/// Conditional evolution at `eta = 1`, `h = 0`: the trajectory average of
/// `<Delta J_z^2>` follows the reduced Riccati solution up to `t = 0.1/M`.
pub fn variance_tracking_suite(cfg: &OracleConfig) -> Result<SuiteReport> {
    if cfg.trajectories < 2 {
        return Err(Error::Config(
            "variance tracking needs at least 2 trajectories".into(),
        ));
    }
    let ops = spin_operators(cfg.spin)?;
    let p = cfg.params(1.0)?;
    let sm = p.sigma_m().expect("eta = 1");
    let dt = cfg.dt();
    let n = steps_for(0.1 / cfg.measurement_rate, dt);
    let runs = parallel_trials(cfg.trajectories, cfg.seed, cfg.workers, |_, rng| {
        let mut s = coherent_state_x(cfg.spin)?;
        let mut out = vec![[cfg.spin, 0.0, s.var_jz(&ops)]];
        for _ in 0..n {
            s = sme_step(&s, 0.0, &ops, &p, dt, rng.wiener(dt))?.0;
            out.push([s.expect(&ops.jx), s.mean_jz(&ops), s.var_jz(&ops)]);
        }
        Ok(out)
    })?;
    let count = runs.len() as f64;
    let mut t = Vec::with_capacity(n + 1);
    let mut cols: Vec<Vec<f64>> = (0..4).map(|_| Vec::with_capacity(n + 1)).collect();
    let mut worst = 0.0f64;
    for k in 0..=n {
        let tk = k as f64 * dt;
        let mean = |i: usize| runs.iter().map(|r| r[k][i]).sum::<f64>() / count;
        let (x, z, v) = (mean(0), mean(1), mean(2));
        let want = reduced_variance(cfg.spin, sm, tk);
        worst = worst.max((v / want - 1.0).abs());
        t.push(tk);
        cols[0].push(x);
        cols[1].push(z);
        cols[2].push(v);
        cols[3].push(want);
    }
    let tol = 0.05;
    let mut columns = vec![t];
    columns.extend(cols);
    Ok(SuiteReport {
        name: "dJz2_tracking",
        statistic: worst,
        tolerance: tol,
        pass: worst <= tol,
        detail: format!(
            "max_t |E<dJz^2> / reduced - 1| over t <= 0.1/M, J = {}, {} trajectories",
            cfg.spin, cfg.trajectories
        ),
        series: series(
            &["t", "Jx_mean", "Jz_mean", "dJz2", "dJz2_reduced"],
            columns,
        ),
    })
}

/// Simulates the true spin at field `b` and returns the photocurrent record.
fn true_record(
    ops: &SpinOperators,
    p: &SmeParams,
    b: f64,
    dt: f64,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let mut s: QuantumState = coherent_state_x(ops.spin)?;
    let mut ydt = Vec::with_capacity(n);
    for _ in 0..n {
        let (next, y) = sme_step(&s, b, ops, p, dt, rng.wiener(dt))?;
        s = next;
        ydt.push(y.expect("eta > 0"));
    }
    Ok(ydt)
}

/// Two hypotheses `{-b0, +b0}`, truth `+b0`: mean posterior mass on the truth
/// after `t = 1/M`, averaged over records.
pub fn two_point_suite(cfg: &OracleConfig, b0: f64) -> Result<SuiteReport> {
    let ops = spin_operators(cfg.spin)?;
    let p = cfg.params(1.0)?;
    let dt = cfg.dt();
    let n = steps_for(1.0 / cfg.measurement_rate, dt);
    let stride = (n / 50).max(1);
    let runs = parallel_trials(cfg.records, cfg.seed ^ 0x2b, cfg.workers, |_, rng| {
        let ydt = true_record(&ops, &p, b0, dt, n, rng)?;
        let mut grid = FieldGrid::new(vec![-b0, b0], vec![0.5, 0.5], &coherent_state_x(cfg.spin)?)?;
        let mut mass = vec![grid.p[1]];
        for (k, &y) in ydt.iter().enumerate() {
            grid.step(y, 0.0, &ops, &p, dt)?;
            if (k + 1) % stride == 0 {
                mass.push(grid.p[1]);
            }
        }
        Ok(mass)
    })?;
    let len = runs[0].len();
    let t: Vec<f64> = (0..len).map(|i| (i * stride) as f64 * dt).collect();
    let mean: Vec<f64> = (0..len)
        .map(|i| runs.iter().map(|r| r[i]).sum::<f64>() / runs.len() as f64)
        .collect();
    let last = *mean.last().unwrap();
    let tol = 0.95;
    Ok(SuiteReport {
        name: "two_point_posterior",
        statistic: last,
        tolerance: tol,
        pass: last >= tol && last > mean[0],
        detail: format!(
            "mean posterior mass on the true field +{b0:e} at t = 1/M over {} records (pass if >= {tol})",
            cfg.records
        ),
        series: series(&["t", "p_true_mean"], vec![t, mean]),
    })
}

/// Kalman oracle for the master-equation record: constant field, spin prior
/// `J/2`. The printed Hamiltonian rotates `<J_z>` at `-gamma J h`, so the
/// coupling enters with that sign.
fn oracle_system(cfg: &OracleConfig, sigma_m: f64) -> StateSpace {
    let g = -cfg.gyro * cfg.spin;
    StateSpace {
        a: Matrix2::new(0.0, g, 0.0, 0.0),
        b: Vector2::new(g, 0.0),
        c: RowVector2::new(1.0, 0.0),
        sigma1: Matrix2::zeros(),
        sigma2: sigma_m,
    }
}

/// Posterior mean of the gridded filter against the Kalman estimate on the
/// same records; the statistic is `max_t |b_grid - b_kalman| / sqrt(sigma_bR)`.
///
/// The prior is Gaussian with standard deviation `angle / (gamma t_end)`, so
/// the typical rotation angle at `t_end = 0.2/M` is `angle`; the Kalman prior
/// variance is the variance of the discretized grid prior.
pub fn grid_kalman_suite(cfg: &OracleConfig, angle: f64) -> Result<SuiteReport> {
    let ops = spin_operators(cfg.spin)?;
    let p = cfg.params(1.0)?;
    let sm = p.sigma_m().expect("eta = 1");
    let dt = cfg.dt();
    let t_end = 0.2 / cfg.measurement_rate;
    let n = steps_for(t_end, dt);
    let sd = angle / (cfg.gyro * t_end);
    let initial = coherent_state_x(cfg.spin)?;
    let template = FieldGrid::gaussian(cfg.grid_points, 4.0 * sd, sd * sd, &initial)?;
    let prior = Priors::new(0.5 * cfg.spin, template.variance())?;
    let sys = oracle_system(cfg, sm);
    let cov = integrate_riccati_uniform(&sys, &prior, dt, n as f64 * dt)?;
    let stride = (n / 50).max(1);

    let runs = parallel_trials(cfg.records, cfg.seed ^ 0x4b, cfg.workers, |_, rng| {
        let b_true = sd * rng.normal();
        let ydt = true_record(&ops, &p, b_true, dt, n, rng)?;
        let mut grid = template.clone();
        let mut kf = FilterState::initial(&prior);
        let mut rows = vec![[grid.mean(), kf.m[1], 0.0]];
        for (k, &y) in ydt.iter().enumerate() {
            grid.step(y, 0.0, &ops, &p, dt)?;
            kf = kalman_step(&kf, y, 0.0, &sys, &cov.gain(k, sm), dt)?;
            if (k + 1) % stride == 0 {
                let env = cov.sigma_b[k + 1].sqrt();
                rows.push([grid.mean(), kf.m[1], (grid.mean() - kf.m[1]).abs() / env]);
            }
        }
        Ok((b_true, rows, grid.b_values.clone(), grid.p.clone()))
    })?;

    let worst = runs
        .iter()
        .flat_map(|r| r.1.iter().map(|row| row[2]))
        .fold(0.0f64, f64::max);
    let first = &runs[0];
    let t: Vec<f64> = (0..first.1.len())
        .map(|i| (i * stride) as f64 * dt)
        .collect();
    let env: Vec<f64> = (0..first.1.len())
        .map(|i| cov.sigma_b[i * stride].sqrt())
        .collect();
    let columns = vec![
        t,
        first.1.iter().map(|r| r[0]).collect(),
        first.1.iter().map(|r| r[1]).collect(),
        env,
        first.1.iter().map(|r| r[2]).collect(),
    ];
    let tol = 1.0;
    Ok(SuiteReport {
        name: "grid_vs_kalman",
        statistic: worst,
        tolerance: tol,
        pass: worst <= tol,
        detail: format!(
            "max over {} records and t <= 0.2/M of |b_grid - b_kalman| / sqrt(sigma_bR), {} grid points",
            cfg.records, cfg.grid_points
        ),
        series: series(&["t", "b_grid", "b_kalman", "sqrt_sigma_bR", "gap_over_envelope"], columns),
    })
}

/// Final `(b, p)` snapshot of a grid.
pub fn grid_snapshot(grid: &FieldGrid) -> SuiteSeries {
    series(&["b", "p"], vec![grid.b_values.clone(), grid.p.clone()])
}

/// The three suites with their default settings.
pub fn run_all(cfg: &OracleConfig) -> Result<Vec<SuiteReport>> {
    Ok(vec![
        jx_decay_suite(cfg)?,
        variance_tracking_suite(cfg)?,
        two_point_suite(cfg, 0.5 * cfg.measurement_rate / cfg.gyro)?,
        grid_kalman_suite(cfg, 0.1)?,
    ])
}
