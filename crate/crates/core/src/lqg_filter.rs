//! Kalman filter and LQG controller runs on simulated measurement records.
//!
//! The filter is the explicit Euler discretization of
//! `dm = (A' m + B' u) dt + K_O (y dt - C m dt)` on the record grid, with
//! `u = -K_C m` applied by zero-order hold.

use nalgebra::{Matrix2, RowVector2, Vector2};

use crate::error::{Error, Result};
use crate::model::{build_system, DesignParams, PlantParams, Priors, StateSpace};
use crate::numerics::RngStream;
use crate::riccati::{
    controller_riccati_steady, integrate_riccati_uniform, steady_state_gains, CovTrajectory,
    GainSchedule,
};
use crate::truth_sim::{self, step_count, Trajectory};

/// Filter mean, covariance and time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub m: Vector2<f64>,
    pub sigma: Matrix2<f64>,
    pub t: f64,
}

impl FilterState {
    /// `m(0) = 0` with the prior covariance.
    pub fn initial(prior: &Priors) -> Self {
        Self {
            m: Vector2::zeros(),
            sigma: prior.covariance(),
            t: 0.0,
        }
    }
}

/// Advance the mean by one record increment; the covariance is carried over
/// unchanged (gains come precomputed from the Riccati solution).
pub fn kalman_step(
    s: &FilterState,
    ydt: f64,
    u: f64,
    sys: &StateSpace,
    k_o: &Vector2<f64>,
    dt: f64,
) -> Result<FilterState> {
    let innovation = ydt - (sys.c * s.m)[0] * dt;
    let m = s.m + (sys.a * s.m + sys.b * u) * dt + k_o * innovation;
    if !(m[0].is_finite() && m[1].is_finite()) {
        return Err(Error::FilterDivergence { time: s.t + dt });
    }
    Ok(FilterState {
        m,
        sigma: s.sigma,
        t: s.t + dt,
    })
}

/// Which observer gain the loop uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMode {
    /// Time-varying `K_O(t)` from the Riccati solution.
    Dynamic,
    /// Constant steady-state `K_O` for the whole run.
    Steady,
}

/// Everything a trial needs from the design, computed once per ensemble.
#[derive(Debug, Clone)]
pub struct LoopDesign {
    pub sys: StateSpace,
    pub gains: GainSchedule,
    pub k_c: RowVector2<f64>,
    /// Designer's Riccati covariance on the record grid (dynamic mode only).
    pub covariance: Option<CovTrajectory>,
    pub dt: f64,
    pub steps: usize,
}

impl LoopDesign {
    pub fn new(
        p: &PlantParams,
        prior: &Priors,
        d: &DesignParams,
        mode: GainMode,
        dt: f64,
        t_end: f64,
    ) -> Result<Self> {
        let steps = step_count(dt, t_end)?;
        let assumed = d.assumed_plant(p)?;
        let sys = build_system(&assumed);
        let k_c = if d.lambda > 0.0 {
            controller_riccati_steady(p, d)?
        } else {
            RowVector2::zeros()
        };
        let design_prior = prior.for_design(p, d);
        let steady_k1 = if assumed.field_diffusion > 0.0 {
            steady_state_gains(p, d)?.k_o[0]
        } else {
            0.0
        };
        let (gains, covariance, k_peak) = match mode {
            GainMode::Dynamic => {
                let cov = integrate_riccati_uniform(&sys, &design_prior, dt, t_end)?;
                let gains = GainSchedule::from_covariance(&cov, sys.sigma2);
                let k_peak = (design_prior.sigma_z0 / sys.sigma2).max(steady_k1);
                (gains, Some(cov), k_peak)
            }
            GainMode::Steady => {
                if assumed.field_diffusion == 0.0 {
                    return Err(Error::NoSteadyState(
                        "steady-gain filter needs sigma_bF > 0",
                    ));
                }
                let k = steady_state_gains(p, d)?.k_o;
                (GainSchedule::Constant(k), None, k[0])
            }
        };
        if dt * k_peak >= 0.05 {
            return Err(Error::StepSize(format!(
                "filter needs dt * K_O1 < 0.05, got {:.3e}",
                dt * k_peak
            )));
        }
        Ok(Self {
            sys,
            gains,
            k_c,
            covariance,
            dt,
            steps,
        })
    }
}

/// Truth record plus the filter estimates aligned with it.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub trajectory: Trajectory,
    pub z_tilde: Vec<f64>,
    pub b_tilde: Vec<f64>,
    /// `(b_tilde - b)^2` per sample.
    pub be_sq: Vec<f64>,
    /// `(z_tilde - z)^2` per sample.
    pub ze_sq: Vec<f64>,
    /// Normalized innovations `(ydt - z_tilde dt) / sqrt(sigma_M dt)` of the
    /// designed filter.
    pub innovations: Vec<f64>,
}

impl RunResult {
    fn assemble(trajectory: Trajectory, ms: Vec<Vector2<f64>>, sigma_m_design: f64) -> Self {
        let dt = trajectory.dt;
        let n = trajectory.len();
        let z_tilde: Vec<f64> = ms.iter().map(|m| m[0]).collect();
        let b_tilde: Vec<f64> = ms.iter().map(|m| m[1]).collect();
        let be_sq = (0..n)
            .map(|k| (b_tilde[k] - trajectory.b[k]).powi(2))
            .collect();
        let ze_sq = (0..n)
            .map(|k| (z_tilde[k] - trajectory.z[k]).powi(2))
            .collect();
        let scale = (sigma_m_design * dt).sqrt();
        let innovations = (0..n)
            .map(|k| (trajectory.ydt[k] - z_tilde[k] * dt) / scale)
            .collect();
        Self {
            trajectory,
            z_tilde,
            b_tilde,
            be_sq,
            ze_sq,
            innovations,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let tr = &self.trajectory;
        crate::output::write_columns(
            out,
            &["t", "z", "b", "u", "z_tilde", "b_tilde"],
            &[&tr.t, &tr.z, &tr.b, &tr.u, &self.z_tilde, &self.b_tilde],
        )
    }
}

/// Run the designed filter and controller on a fresh truth trajectory.
pub fn run_closed_loop_with(
    p: &PlantParams,
    prior: &Priors,
    design: &LoopDesign,
    rng: &mut RngStream,
) -> Result<RunResult> {
    let t_end = design.steps as f64 * design.dt;
    let field = truth_sim::simulate_field(p, prior, rng, design.dt, t_end)?;
    let n = field.len();
    let z0 = prior.sigma_z0.sqrt() * rng.normal();
    let dw: Vec<f64> = (0..n).map(|_| rng.wiener(design.dt)).collect();
    filter_record(p, design, z0, &field, &dw)
}

/// Run the designed loop on supplied randomness, so that records can be
/// replayed exactly.
pub fn filter_record(
    p: &PlantParams,
    design: &LoopDesign,
    z0: f64,
    field: &[f64],
    dw_meas: &[f64],
) -> Result<RunResult> {
    let dt = design.dt;
    let mut ms: Vec<Vector2<f64>> = Vec::with_capacity(field.len());
    let mut state = FilterState {
        m: Vector2::zeros(),
        sigma: Matrix2::zeros(),
        t: 0.0,
    };
    let mut last_u = 0.0;
    let mut fault = None;
    let tr = truth_sim::simulate_plant_from_draws(p, z0, field, dw_meas, dt, |k, t, hist| {
        if k > 0 {
            match kalman_step(
                &state,
                hist[k - 1],
                last_u,
                &design.sys,
                &design.gains.sample(k - 1),
                dt,
            ) {
                Ok(s) => state = s,
                Err(e) => {
                    fault.get_or_insert(e);
                    return f64::NAN;
                }
            }
            state.t = t;
        }
        ms.push(state.m);
        last_u = -(design.k_c * state.m)[0];
        last_u
    });
    if let Some(e) = fault {
        return Err(e);
    }
    let tr = tr?;
    Ok(RunResult::assemble(tr, ms, design.sys.sigma2))
}

/// Convenience wrapper: build the design and run one trial.
pub fn run_closed_loop(
    p: &PlantParams,
    prior: &Priors,
    d: &DesignParams,
    mode: GainMode,
    rng: &mut RngStream,
    dt: f64,
    t_end: f64,
) -> Result<RunResult> {
    let design = LoopDesign::new(p, prior, d, mode, dt, t_end)?;
    run_closed_loop_with(p, prior, &design, rng)
}

/// Least-squares slope of the record rate `ydt/dt` against time.
pub fn fit_slope(t: &[f64], ydt: &[f64], dt: f64) -> Result<f64> {
    let n = t.len();
    if n < 3 || ydt.len() != n {
        return Err(Error::Fit(n.min(ydt.len())));
    }
    let t_mean = t.iter().sum::<f64>() / n as f64;
    let y_mean = ydt.iter().sum::<f64>() / (n as f64 * dt);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for k in 0..n {
        let dx = t[k] - t_mean;
        sxy += dx * (ydt[k] / dt - y_mean);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

/// Open-loop field estimates `b~ = slope / (gamma J_assumed)` from a straight
/// line fitted to each record.
pub fn run_open_loop_linefit(
    p: &PlantParams,
    j_assumed: f64,
    records: &[Trajectory],
) -> Result<Vec<f64>> {
    if !p.is_constant_field() {
        return Err(Error::Unsupported(
            "line-fit estimation assumes a constant field",
        ));
    }
    records
        .iter()
        .map(|r| Ok(fit_slope(&r.t, &r.ydt, r.dt)? / (p.gyro * j_assumed)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::truth_sim::simulate_plant_from_draws;

    fn sys() -> StateSpace {
        build_system(&PlantParams::fluctuating(10.0, 1.0, 1.0, 2.0, 1.0).unwrap())
    }

    #[test]
    fn zero_innovation_zero_drift_keeps_mean() {
        let s = FilterState {
            m: Vector2::new(0.3, 0.0),
            sigma: Matrix2::identity(),
            t: 0.0,
        };
        let next = kalman_step(&s, 0.3 * 0.01, 0.0, &sys(), &Vector2::new(5.0, 1.0), 0.01).unwrap();
        assert_eq!(next.m, s.m);
    }

    #[test]
    fn zero_gain_is_model_propagation() {
        let s = FilterState {
            m: Vector2::new(0.3, -0.2),
            sigma: Matrix2::identity(),
            t: 0.0,
        };
        let sys = sys();
        let next = kalman_step(&s, 123.0, 0.5, &sys, &Vector2::zeros(), 0.01).unwrap();
        let want = s.m + (sys.a * s.m + sys.b * 0.5) * 0.01;
        assert!((next.m - want).norm() < 1e-15);
    }

    #[test]
    fn divergence_reported() {
        let s = FilterState::initial(&Priors::new(1.0, 1.0).unwrap());
        let err =
            kalman_step(&s, f64::INFINITY, 0.0, &sys(), &Vector2::new(1.0, 1.0), 0.1).unwrap_err();
        assert!(matches!(err, Error::FilterDivergence { .. }));
    }

    #[test]
    fn line_fit_recovers_ramp() {
        let p = PlantParams::constant_field(100.0, 2.0, 1.0).unwrap();
        let n = 50;
        let tr =
            simulate_plant_from_draws(&p, 0.7, &vec![0.25; n], &vec![0.0; n], 1e-3, |_, _, _| 0.0)
                .unwrap();
        let b = run_open_loop_linefit(&p, 100.0, std::slice::from_ref(&tr)).unwrap()[0];
        assert!((b - 0.25).abs() < 1e-12);
        let b_half = run_open_loop_linefit(&p, 50.0, &[tr]).unwrap()[0];
        assert!((b_half - 0.5).abs() < 1e-12);
    }

    #[test]
    fn line_fit_needs_three_samples() {
        assert!(matches!(
            fit_slope(&[0.0, 1.0], &[0.0, 1.0], 1.0),
            Err(Error::Fit(2))
        ));
    }

    #[test]
    fn steady_mode_needs_fluctuations() {
        let p = PlantParams::constant_field(1e6, 1e6, 1e4).unwrap();
        let prior = Priors::coherent(1e6, 1.0).unwrap();
        let d = DesignParams::matched(&p, 0.0).unwrap();
        let err = LoopDesign::new(&p, &prior, &d, GainMode::Steady, 1e-12, 1e-9).unwrap_err();
        assert!(matches!(err, Error::NoSteadyState(_)));
    }

    #[test]
    fn perturbing_the_record_only_affects_the_future() {
        let p = PlantParams::fluctuating(1e6, 1e6, 1e4, 1e5, 1.0).unwrap();
        let prior = Priors::coherent(1e6, 1.0).unwrap();
        let d = DesignParams::matched(&p, 0.1).unwrap();
        let design = LoopDesign::new(&p, &prior, &d, GainMode::Dynamic, 2e-12, 2e-9).unwrap();
        let mut rng = RngStream::new(4);
        let field = truth_sim::simulate_field(&p, &prior, &mut rng, 2e-12, 2e-9).unwrap();
        let dw: Vec<f64> = (0..field.len()).map(|_| rng.wiener(2e-12)).collect();
        let a = filter_record(&p, &design, 1.0, &field, &dw).unwrap();
        let mut dw2 = dw.clone();
        let k_star = 400;
        dw2[k_star] += 1e-6;
        let b = filter_record(&p, &design, 1.0, &field, &dw2).unwrap();
        for k in 0..=k_star {
            assert_eq!(a.b_tilde[k], b.b_tilde[k]);
            assert_eq!(a.z_tilde[k], b.z_tilde[k]);
        }
        assert_ne!(a.b_tilde[k_star + 1], b.b_tilde[k_star + 1]);
    }
}
