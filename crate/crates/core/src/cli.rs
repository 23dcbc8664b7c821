//! Scenario files and the experiment commands behind the `spinmag` binary.
//!
//! A scenario is a flat TOML table. Physical keys: `J`, `gamma`, `M`, `eta`,
//! `gamma_b`, `sigma_bF`, `sigma_z0`, `sigma_b0`, `J_prime`, `lambda`, `dt`,
//! `T`, `seed`, `trials`. Command options: `mode`, `f_sweep`, `t_ref`,
//! `t_first`, `per_decade`, `stride`, `omega_min`, `omega_max`,
//! `omega_per_decade`, `J_min`, `J_max`, `omega_Q`, `omega_1`, `omega_L`,
//! `J_points`, `records`, `grid_points`, `step_fraction`. Unknown keys are
//! rejected.
//!
//! Every command writes one CSV (header row, 17 significant digits) and a
//! `key: value` text report.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::ensemble::run_ensemble;
use crate::error::{Error, Result};
use crate::freq::{
    char_freqs, closed_loop_tfs, closing_frequency, design_robust_controller, log_grid,
    sensitivity_norm, write_bode_csv,
};
use crate::lqg_filter::{run_closed_loop_with, GainMode, LoopDesign};
use crate::model::{DesignParams, PlantParams, Priors};
use crate::numerics::{geometric_grid, RngStream};
use crate::output::{fmt_f64, write_columns};
use crate::qsme::verify::{run_all, OracleConfig};
use crate::riccati::{
    analytic_sigma_b, analytic_sigma_z, integrate_estimator_riccati_on, linearized_riccati_through,
    peak_observer_gain, steady_state_gains,
};
use crate::total_covariance::{
    design_field_variance, mismatch_covariance, mismatch_factors, steady_gain_covariance,
    MismatchRegime, Propagation,
};

/// Largest `dt K_O1` the default step allows.
const DEFAULT_GAIN_STEP: f64 = 0.02;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(rename = "J")]
    pub spin: Option<f64>,
    pub gamma: Option<f64>,
    #[serde(rename = "M")]
    pub measurement_rate: Option<f64>,
    pub eta: Option<f64>,
    pub gamma_b: Option<f64>,
    #[serde(rename = "sigma_bF")]
    pub sigma_bf: Option<f64>,
    pub sigma_z0: Option<f64>,
    pub sigma_b0: Option<f64>,
    #[serde(rename = "J_prime")]
    pub spin_prime: Option<f64>,
    pub lambda: Option<f64>,
    pub dt: Option<f64>,
    #[serde(rename = "T")]
    pub t_end: Option<f64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,

    /// `dynamic` / `steady` gain for montecarlo and simulate; `steady` /
    /// `transient` regime for mismatch.
    pub mode: Option<String>,
    pub f_sweep: Option<Vec<f64>>,
    pub t_ref: Option<f64>,
    pub t_first: Option<f64>,
    pub per_decade: Option<usize>,
    pub stride: Option<usize>,
    pub omega_min: Option<f64>,
    pub omega_max: Option<f64>,
    pub omega_per_decade: Option<usize>,
    #[serde(rename = "J_min")]
    pub j_min: Option<f64>,
    #[serde(rename = "J_max")]
    pub j_max: Option<f64>,
    #[serde(rename = "omega_Q")]
    pub omega_q: Option<f64>,
    pub omega_1: Option<f64>,
    #[serde(rename = "omega_L")]
    pub omega_l: Option<f64>,
    #[serde(rename = "J_points")]
    pub j_points: Option<usize>,
    pub records: Option<usize>,
    pub grid_points: Option<usize>,
    pub step_fraction: Option<f64>,
}

fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("scenario is missing `{key}`")))
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Scenario(inner) => Error::Config(format!("{}: {inner}", path.display())),
            other => other,
        })
    }

    /// Check every physical parameter that is present.
    pub fn validate(&self) -> Result<()> {
        if self.spin.is_some() {
            let p = self.plant()?;
            if self.sigma_b0.is_some() || !p.is_constant_field() {
                self.priors(&p)?;
            }
            self.design(&p)?;
        }
        for (key, v) in [
            ("dt", self.dt),
            ("T", self.t_end),
            ("t_ref", self.t_ref),
            ("t_first", self.t_first),
        ] {
            if let Some(x) = v {
                if !(x > 0.0) || !x.is_finite() {
                    return Err(Error::Config(format!(
                        "`{key}` must be positive and finite, got {x}"
                    )));
                }
            }
        }
        if let Some(fs) = &self.f_sweep {
            if fs.is_empty() || fs.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
                return Err(Error::Config(
                    "`f_sweep` must be a non-empty list of positive ratios".into(),
                ));
            }
        }
        if let Some(m) = &self.mode {
            if !["dynamic", "steady", "transient"].contains(&m.as_str()) {
                return Err(Error::Config(format!(
                    "`mode` must be dynamic, steady or transient, got `{m}`"
                )));
            }
        }
        Ok(())
    }

    pub fn plant(&self) -> Result<PlantParams> {
        PlantParams::new(
            need(self.spin, "J")?,
            need(self.gamma, "gamma")?,
            need(self.measurement_rate, "M")?,
            self.eta.unwrap_or(1.0),
            self.gamma_b.unwrap_or(0.0),
            self.sigma_bf.unwrap_or(0.0),
        )
    }

    /// `sigma_z0` defaults to the coherent value `J/2`; `sigma_b0` defaults
    /// to the stationary field variance when the field fluctuates.
    pub fn priors(&self, p: &PlantParams) -> Result<Priors> {
        let sigma_b0 = match self.sigma_b0 {
            Some(v) => v,
            None => p.sigma_bfree().map_err(|_| {
                Error::Config("scenario with a constant field needs `sigma_b0`".into())
            })?,
        };
        Priors::new(self.sigma_z0.unwrap_or(p.spin / 2.0), sigma_b0)
    }

    pub fn design(&self, p: &PlantParams) -> Result<DesignParams> {
        DesignParams::new(
            self.spin_prime.unwrap_or(p.spin),
            self.lambda.unwrap_or(0.0),
        )
    }

    pub fn t_end(&self) -> Result<f64> {
        need(self.t_end, "T")
    }

    /// `dt` from the scenario, else `min(1e-3/omega_C, T/1e4)`, further
    /// capped so that `dt K_O1 <= 0.02`.
    pub fn step(&self, p: &PlantParams, prior: &Priors, d: &DesignParams) -> Result<f64> {
        if let Some(dt) = self.dt {
            return Ok(dt);
        }
        let t_end = self.t_end()?;
        let mut dt = t_end / 1e4;
        if let Ok(cf) = char_freqs(p, d) {
            dt = dt.min(1e-3 / cf.omega_c);
        }
        let assumed = d.assumed_plant(p)?;
        let k_peak = peak_observer_gain(&assumed, &prior.for_design(p, d));
        if k_peak > 0.0 {
            dt = dt.min(DEFAULT_GAIN_STEP / k_peak);
        }
        Ok(dt)
    }

    fn gain_mode(&self) -> Result<GainMode> {
        match self.mode.as_deref() {
            None | Some("dynamic") => Ok(GainMode::Dynamic),
            Some("steady") => Ok(GainMode::Steady),
            Some(m) => Err(Error::Config(format!(
                "gain mode must be dynamic or steady, got `{m}`"
            ))),
        }
    }

    /// Log time grid `[0, t_first, ..., T]`, with `t_ref` inserted.
    fn time_grid(&self) -> Result<Vec<f64>> {
        let t_end = self.t_end()?;
        let t_first = self.t_first.unwrap_or(t_end * 1e-6);
        if t_first >= t_end {
            return Err(Error::Config(format!(
                "t_first = {t_first:e} must lie below T = {t_end:e}"
            )));
        }
        let mut grid = geometric_grid(t_first, t_end, self.per_decade.unwrap_or(20));
        if let Some(t_ref) = self.t_ref {
            if t_ref > t_end {
                return Err(Error::Config(format!(
                    "t_ref = {t_ref:e} lies beyond T = {t_end:e}"
                )));
            }
            if !grid.contains(&t_ref) {
                let at = grid.partition_point(|&t| t < t_ref);
                grid.insert(at, t_ref);
            }
        }
        Ok(grid)
    }
}

/// Flags shared by every verb.
#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads for trial-level parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Estimator covariance from the numeric, closed-form and linearized solvers.
    Riccati(CommonArgs),
    /// Closed-loop Monte Carlo ensemble against the Riccati prediction.
    Montecarlo(CommonArgs),
    /// Total-covariance sweep over the spin ratio f = J / J'.
    Mismatch(CommonArgs),
    /// Bode data for G_z, G_b, G_u and the characteristic frequencies.
    Bode(CommonArgs),
    /// Robust loop-shaping design over a spin range.
    Design(CommonArgs),
    /// Small-spin master-equation checks of the Gaussian filter.
    QsmeVerify(CommonArgs),
    /// One closed-loop trajectory.
    Simulate(CommonArgs),
}

#[derive(Debug, Clone, Parser)]
#[command(
    name = "spinmag",
    version,
    about = "Continuous-measurement spin magnetometry experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Seed and worker count after flag overrides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub seed: u64,
    pub workers: usize,
}

impl RunOptions {
    pub fn resolve(args: &CommonArgs, scenario: &Scenario) -> Self {
        let workers = args
            .workers
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
        Self {
            seed: args.seed.or(scenario.seed).unwrap_or(1),
            workers: workers.max(1),
        }
    }
}

fn kv(report: &mut dyn Write, key: &str, value: impl std::fmt::Display) -> Result<()> {
    writeln!(report, "{key}: {value}")?;
    Ok(())
}

fn rel_dev(x: f64, reference: f64) -> f64 {
    if x == reference {
        0.0
    } else {
        (x - reference).abs() / reference.abs().max(f64::MIN_POSITIVE)
    }
}

/// Numeric RK4 covariance on a log grid, with the constant-field closed form
/// (when it applies) and the linearized solution alongside.
pub fn cmd_riccati(sc: &Scenario, csv: &mut dyn Write, report: &mut dyn Write) -> Result<()> {
    let p = sc.plant()?;
    let prior = sc.priors(&p)?;
    let times = sc.time_grid()?;
    let num = integrate_estimator_riccati_on(&p, &prior, &times)?;
    let mut headers = vec!["t", "sigma_bR", "sigma_zR"];
    let mut cols: Vec<Vec<f64>> = vec![times.clone(), num.sigma_b.clone(), num.sigma_z.clone()];

    let dev_of = |b: &[f64], z: &[f64]| -> Vec<f64> {
        (0..times.len())
            .map(|k| rel_dev(b[k], num.sigma_b[k]).max(rel_dev(z[k], num.sigma_z[k])))
            .collect()
    };
    let mut max_analytic = None;
    if p.is_constant_field() {
        let b: Vec<f64> = times
            .iter()
            .map(|&t| analytic_sigma_b(&p, &prior, t))
            .collect::<Result<_>>()?;
        let z: Vec<f64> = times
            .iter()
            .map(|&t| analytic_sigma_z(&p, &prior, t))
            .collect::<Result<_>>()?;
        let dev = dev_of(&b, &z);
        max_analytic = Some(dev.iter().copied().fold(0.0, f64::max));
        headers.extend(["sigma_bR_analytic", "sigma_zR_analytic", "rel_dev_analytic"]);
        cols.extend([b, z, dev]);
    }
    let lin = linearized_riccati_through(&p, &prior, &times)?;
    let b: Vec<f64> = lin.iter().map(|s| s[(1, 1)]).collect();
    let z: Vec<f64> = lin.iter().map(|s| s[(0, 0)]).collect();
    let dev = dev_of(&b, &z);
    let max_linear = dev.iter().copied().fold(0.0, f64::max);
    headers.extend([
        "sigma_bR_linearized",
        "sigma_zR_linearized",
        "rel_dev_linearized",
    ]);
    cols.extend([b, z, dev]);

    let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_columns(csv, &headers, &c)?;

    kv(report, "points", times.len())?;
    kv(
        report,
        "sigma_bR_final",
        fmt_f64(*num.sigma_b.last().unwrap()),
    )?;
    kv(
        report,
        "sigma_zR_final",
        fmt_f64(*num.sigma_z.last().unwrap()),
    )?;
    if let Ok(s) = steady_state_gains(&p, &DesignParams::matched(&p, 0.0)?) {
        kv(report, "sigma_bS", fmt_f64(s.sigma_bs))?;
        kv(report, "sigma_zS", fmt_f64(s.sigma_zs))?;
    }
    if let Some(m) = max_analytic {
        kv(report, "max_rel_dev_analytic", fmt_f64(m))?;
    }
    kv(report, "max_rel_dev_linearized", fmt_f64(max_linear))
}

/// Closed-loop ensemble with the Riccati (dynamic) or exact total-covariance
/// (steady gain) reference column `sigma_bR`.
pub fn cmd_montecarlo(
    sc: &Scenario,
    opts: RunOptions,
    csv: &mut dyn Write,
    report: &mut dyn Write,
) -> Result<()> {
    let p = sc.plant()?;
    let prior = sc.priors(&p)?;
    let d = sc.design(&p)?;
    let mode = sc.gain_mode()?;
    let t_end = sc.t_end()?;
    let dt = sc.step(&p, &prior, &d)?;
    let trials = sc.trials.unwrap_or(2000);
    let stride = sc.stride.unwrap_or(1).max(1);
    let design = LoopDesign::new(&p, &prior, &d, mode, dt, t_end)?;
    let summary = run_ensemble(trials, opts.seed, opts.workers, stride, |rng| {
        run_closed_loop_with(&p, &prior, &design, rng)
    })?;
    let reference: Vec<f64> = match &design.covariance {
        Some(cov) => cov
            .sigma_b
            .iter()
            .step_by(stride)
            .take(summary.t.len())
            .copied()
            .collect(),
        None => steady_gain_covariance(&p, &prior, &d, &summary.t)?
            .iter()
            .map(|r| r.sigma_be)
            .collect(),
    };
    summary.write_csv(csv, Some(("sigma_bR", &reference)))?;

    let worst = summary
        .sigma_be
        .iter()
        .zip(&reference)
        .skip(1)
        .map(|(&e, &r)| rel_dev(e, r))
        .fold(0.0, f64::max);
    kv(report, "trials", trials)?;
    kv(report, "seed", opts.seed)?;
    kv(report, "dt", fmt_f64(dt))?;
    kv(
        report,
        "mode",
        if mode == GainMode::Dynamic {
            "dynamic"
        } else {
            "steady"
        },
    )?;
    kv(
        report,
        "sigma_bE_final",
        fmt_f64(*summary.sigma_be.last().unwrap()),
    )?;
    kv(
        report,
        "sigma_bR_final",
        fmt_f64(*reference.last().unwrap()),
    )?;
    kv(report, "max_rel_dev", fmt_f64(worst))
}

/// One row per `(f, t)`: mismatched `sigma_bE`, the matched reference, their
/// ratio and the closed-form factor (NaN and `flagged = 1` outside its
/// validity domain).
pub fn cmd_mismatch(sc: &Scenario, csv: &mut dyn Write, report: &mut dyn Write) -> Result<()> {
    let base = sc.plant()?;
    let d = sc.design(&base)?;
    let transient = match sc.mode.as_deref() {
        None | Some("steady") => false,
        Some("transient") => true,
        Some(m) => {
            return Err(Error::Config(format!(
                "mismatch mode must be steady or transient, got `{m}`"
            )))
        }
    };
    let controlled = d.lambda > 0.0;
    let regime = match (transient, controlled) {
        (false, true) => MismatchRegime::ControlledSteady,
        (false, false) => MismatchRegime::UncontrolledFluctuating,
        (true, true) => MismatchRegime::ControlledTransient,
        (true, false) => MismatchRegime::UncontrolledConstant,
    };
    let f_sweep = sc.f_sweep.clone().unwrap_or_else(|| vec![1.0]);
    let times = sc.time_grid()?;
    let t_ref = sc.t_ref.unwrap_or(*times.last().unwrap());
    let i_ref = times.partition_point(|&t| t < t_ref);

    let n = times.len();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 7];
    kv(report, "regime", format!("{regime:?}"))?;
    kv(report, "J_prime", fmt_f64(d.spin))?;
    kv(report, "t_ref", fmt_f64(times[i_ref]))?;
    for (idx, &f) in f_sweep.iter().enumerate() {
        let p = base.with_spin(f * d.spin)?;
        let prior = match sc.sigma_z0 {
            Some(_) => sc.priors(&p)?,
            None => Priors::coherent(p.spin, sc.priors(&p)?.sigma_b0)?,
        };
        let rows = mismatch_covariance(&p, &prior, &d, &times, Propagation::Exact)?;
        let reference: Vec<f64> = match regime {
            MismatchRegime::ControlledTransient => design_field_variance(&p, &prior, &d, &times)?,
            MismatchRegime::UncontrolledConstant => vec![prior.sigma_b0; n],
            MismatchRegime::ControlledSteady => vec![steady_state_gains(&p, &d)?.sigma_bs; n],
            MismatchRegime::UncontrolledFluctuating => vec![p.sigma_bfree()?; n],
        };
        let (predicted, flagged) = match mismatch_factors(f, regime) {
            Ok(v) if regime == MismatchRegime::UncontrolledFluctuating && f == 1.0 => {
                let floor = steady_state_gains(&p, &d)?.sigma_bs / reference[0];
                (v.max(floor), 0.0)
            }
            Ok(v) => (v, 0.0),
            Err(Error::OutOfValidity(_)) => (f64::NAN, 1.0),
            Err(e) => return Err(e),
        };
        for k in 0..n {
            let factor = rows[k].sigma_be / reference[k];
            let row = [
                f,
                times[k],
                rows[k].sigma_be,
                reference[k],
                factor,
                predicted,
                flagged,
            ];
            for (c, v) in cols.iter_mut().zip(row) {
                c.push(v);
            }
        }
        let factor = rows[i_ref].sigma_be / reference[i_ref];
        let status = if flagged > 0.0 {
            "out_of_validity"
        } else {
            "ok"
        };
        kv(
            report,
            &format!("inset.{idx}"),
            format!(
                "f={} factor={} predicted={} rel_dev={} status={status}",
                fmt_f64(f),
                fmt_f64(factor),
                fmt_f64(predicted),
                fmt_f64(rel_dev(factor, predicted)),
            ),
        )?;
    }
    let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_columns(
        csv,
        &[
            "f",
            "t",
            "sigma_bE",
            "reference",
            "factor",
            "predicted",
            "flagged",
        ],
        &c,
    )
}

/// Bode CSV for the steady closed loop plus limit and bisected frequencies.
pub fn cmd_bode(sc: &Scenario, csv: &mut dyn Write, report: &mut dyn Write) -> Result<()> {
    let p = sc.plant()?;
    let d = sc.design(&p)?;
    let tfs = closed_loop_tfs(&p, &d)?;
    let cf = char_freqs(&p, &d);
    let (lo, hi) = match (&cf, sc.omega_min, sc.omega_max) {
        (_, Some(lo), Some(hi)) => (lo, hi),
        (Ok(c), lo, hi) => (
            lo.unwrap_or(c.omega_l / 100.0),
            hi.unwrap_or(100.0 * c.omega_q),
        ),
        (Err(_), _, _) => {
            return Err(Error::Config(
                "out-of-regime scenario needs explicit `omega_min` and `omega_max`".into(),
            ))
        }
    };
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Config(format!(
            "frequency bounds [{lo:e}, {hi:e}] are not increasing"
        )));
    }
    let per_decade = sc.omega_per_decade.unwrap_or(400);
    let n = ((hi / lo).log10() * per_decade as f64).ceil() as usize + 1;
    let omega = log_grid(lo, hi, n);
    write_bode_csv(
        csv,
        &omega,
        &[("G_z", &tfs.g_z), ("G_b", &tfs.g_b), ("G_u", &tfs.g_u)],
    )?;

    kv(report, "points", n)?;
    match cf {
        Ok(c) => {
            kv(report, "omega_L", fmt_f64(c.omega_l))?;
            kv(report, "omega_H", fmt_f64(c.omega_h))?;
            kv(report, "omega_C", fmt_f64(c.omega_c))?;
            kv(report, "omega_Q", fmt_f64(c.omega_q))?;
            kv(report, "G_u_DC", fmt_f64(c.g_u_dc))?;
            kv(report, "G_u_AC", fmt_f64(c.g_u_ac))?;
            kv(report, "omega_C_closure", fmt_f64(c.omega_c_closure))?;
            kv(report, "closure_ratio", fmt_f64(c.closure_ratio()))?;
        }
        Err(e) => {
            kv(report, "regime", e)?;
            let w = closing_frequency(&tfs.g_u, p.gamma_j(), lo, hi)?;
            kv(report, "omega_C_closure", fmt_f64(w))?;
        }
    }
    kv(report, "G_u_dc_gain", fmt_f64(tfs.g_u.dc_gain()))
}

/// Robust design over `J_points` log-spaced spins in `[J_min, J_max]`.
/// Returns [`Error::Unstable`] after writing the table if any spin
/// destabilizes the loop.
pub fn cmd_design(sc: &Scenario, csv: &mut dyn Write, report: &mut dyn Write) -> Result<()> {
    let j_min = need(sc.j_min, "J_min")?;
    let j_max = need(sc.j_max, "J_max")?;
    let gamma = need(sc.gamma, "gamma")?;
    let design = match design_robust_controller(
        j_min,
        j_max,
        need(sc.omega_q, "omega_Q")?,
        need(sc.omega_1, "omega_1")?,
        sc.omega_l,
        gamma,
    ) {
        Ok(d) => d,
        Err(e) => {
            kv(report, "feasible", false)?;
            kv(report, "reason", &e)?;
            return Err(e);
        }
    };
    let lo = sc.omega_min.unwrap_or(design.omega_l / 10.0);
    let hi = sc.omega_max.unwrap_or(10.0 * design.omega_q);
    let per_decade = sc.omega_per_decade.unwrap_or(400);
    let grid = log_grid(
        lo,
        hi,
        ((hi / lo).log10() * per_decade as f64).ceil() as usize + 1,
    );
    let js = log_grid(j_min, j_max, sc.j_points.unwrap_or(25).max(2));
    let w1 = design.weight();

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 5];
    let mut all_stable = true;
    let mut worst = 0.0f64;
    for &j in &js {
        let (norm, peak, stable) = match sensitivity_norm(&design.c, j, gamma, &w1, &grid) {
            Ok(pk) => (pk.value, pk.omega, 1.0),
            Err(Error::Unstable(_)) => (f64::NAN, f64::NAN, 0.0),
            Err(e) => return Err(e),
        };
        all_stable &= stable > 0.0;
        worst = worst.max(norm);
        for (c, v) in cols
            .iter_mut()
            .zip([j, design.omega_cr(j), norm, peak, stable])
        {
            c.push(v);
        }
    }
    let c: Vec<&[f64]> = cols.iter().map(Vec::as_slice).collect();
    write_columns(
        csv,
        &["J", "omega_CR", "norm_W1S", "omega_peak", "stable"],
        &c,
    )?;

    kv(report, "feasible", true)?;
    kv(report, "W10", fmt_f64(design.w10))?;
    kv(report, "omega_1", fmt_f64(design.omega_1))?;
    kv(report, "omega_L", fmt_f64(design.omega_l))?;
    kv(report, "omega_H", fmt_f64(design.omega_h))?;
    kv(report, "omega_Q", fmt_f64(design.omega_q))?;
    kv(report, "controller_gain", fmt_f64(design.gain_c))?;
    kv(
        report,
        "tradeoff_W10_omega_1",
        fmt_f64(design.w10 * design.omega_1),
    )?;
    kv(
        report,
        "tradeoff_omega_Q_Jmin_over_Jmax",
        fmt_f64(design.omega_q * j_min / j_max),
    )?;
    kv(report, "max_norm_W1S", fmt_f64(worst))?;
    kv(report, "performance_met", worst < 1.0)?;
    kv(report, "all_stable", all_stable)?;
    if !all_stable {
        return Err(Error::Unstable(
            "designed controller destabilizes part of the spin range".into(),
        ));
    }
    Ok(())
}

/// Oracle suites on a small spin. The CSV lists one row per suite; when
/// `series_dir` is given each suite's sampled series is written there too.
pub fn cmd_qsme_verify(
    sc: &Scenario,
    opts: RunOptions,
    csv: &mut dyn Write,
    report: &mut dyn Write,
    series_dir: Option<&Path>,
) -> Result<()> {
    let defaults = OracleConfig::default();
    let cfg = OracleConfig {
        spin: sc.spin.unwrap_or(defaults.spin),
        gyro: sc.gamma.unwrap_or(defaults.gyro),
        measurement_rate: sc.measurement_rate.unwrap_or(defaults.measurement_rate),
        trajectories: sc.trials.unwrap_or(defaults.trajectories),
        records: sc.records.unwrap_or(defaults.records),
        seed: opts.seed,
        workers: opts.workers,
        step_fraction: sc.step_fraction.unwrap_or(defaults.step_fraction),
        grid_points: sc.grid_points.unwrap_or(defaults.grid_points),
    };
    let reports = run_all(&cfg)?;
    let mut w = csv::Writer::from_writer(csv);
    w.write_record(["suite", "statistic", "tolerance", "pass"])?;
    for r in &reports {
        w.write_record([
            r.name,
            &fmt_f64(r.statistic),
            &fmt_f64(r.tolerance),
            if r.pass { "1" } else { "0" },
        ])?;
        kv(
            report,
            r.name,
            format!(
                "statistic={} tolerance={} pass={}",
                fmt_f64(r.statistic),
                fmt_f64(r.tolerance),
                r.pass
            ),
        )?;
        if let Some(dir) = series_dir {
            std::fs::create_dir_all(dir)?;
            r.series.write_csv(BufWriter::new(File::create(
                dir.join(format!("{}.csv", r.name)),
            )?))?;
        }
    }
    w.flush()?;
    let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name).collect();
    if !failed.is_empty() {
        return Err(Error::Acceptance(format!(
            "suites failed: {}",
            failed.join(", ")
        )));
    }
    Ok(())
}

/// A single closed-loop trajectory with its filter estimates.
pub fn cmd_simulate(
    sc: &Scenario,
    opts: RunOptions,
    csv: &mut dyn Write,
    report: &mut dyn Write,
) -> Result<()> {
    let p = sc.plant()?;
    let prior = sc.priors(&p)?;
    let d = sc.design(&p)?;
    let t_end = sc.t_end()?;
    let dt = sc.step(&p, &prior, &d)?;
    let design = LoopDesign::new(&p, &prior, &d, sc.gain_mode()?, dt, t_end)?;
    let run = run_closed_loop_with(&p, &prior, &design, &mut RngStream::new(opts.seed))?;
    run.write_csv(csv)?;
    kv(report, "seed", opts.seed)?;
    kv(report, "dt", fmt_f64(dt))?;
    kv(report, "steps", run.trajectory.len())?;
    kv(
        report,
        "b_final",
        fmt_f64(*run.trajectory.b.last().unwrap()),
    )?;
    kv(
        report,
        "b_tilde_final",
        fmt_f64(*run.b_tilde.last().unwrap()),
    )
}

/// Run one parsed command. CSV goes to `--out` (or stdout); the report goes
/// to stdout when `--out` is set and to stderr otherwise.
pub fn run(cli: &Cli) -> Result<()> {
    let args = match &cli.command {
        Command::Riccati(a)
        | Command::Montecarlo(a)
        | Command::Mismatch(a)
        | Command::Bode(a)
        | Command::Design(a)
        | Command::QsmeVerify(a)
        | Command::Simulate(a) => a,
    };
    let sc = Scenario::load(&args.scenario)?;
    let opts = RunOptions::resolve(args, &sc);
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    let (mut csv, mut report): (Box<dyn Write>, Box<dyn Write>) = match &args.out {
        Some(path) => (
            Box::new(BufWriter::new(File::create(path)?)),
            Box::new(stdout.lock()),
        ),
        None => (Box::new(stdout.lock()), Box::new(stderr.lock())),
    };
    let (csv, report) = (csv.as_mut(), report.as_mut());
    let result = match &cli.command {
        Command::Riccati(_) => cmd_riccati(&sc, csv, report),
        Command::Montecarlo(_) => cmd_montecarlo(&sc, opts, csv, report),
        Command::Mismatch(_) => cmd_mismatch(&sc, csv, report),
        Command::Bode(_) => cmd_bode(&sc, csv, report),
        Command::Design(_) => cmd_design(&sc, csv, report),
        Command::QsmeVerify(_) => {
            let dir = args.out.as_ref().map(|o| o.with_extension("series"));
            cmd_qsme_verify(&sc, opts, csv, report, dir.as_deref())
        }
        Command::Simulate(_) => cmd_simulate(&sc, opts, csv, report),
    };
    csv.flush()?;
    report.flush()?;
    result
}
