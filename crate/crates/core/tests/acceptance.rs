//! Acceptance criteria AC1-AC11, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines are always printed. A FAIL
//! line does not fail `cargo test`; broken invariants (non-finite output,
//! negative variances, unstable loops, non-deterministic bytes) do.

use std::process::ExitCode;
use std::time::Instant;

use spinmag::cli::{
    cmd_mismatch, cmd_montecarlo, cmd_qsme_verify, cmd_riccati, RunOptions, Scenario,
};
use spinmag::ensemble::run_ensemble;
use spinmag::freq::{char_freqs, design_robust_controller, log_grid, sensitivity_norm};
use spinmag::lqg_filter::{run_closed_loop_with, GainMode, LoopDesign};
use spinmag::numerics::geometric_grid;
use spinmag::qsme::verify::{run_all, OracleConfig};
use spinmag::riccati::{
    analytic_sigma_b, analytic_sigma_z, integrate_estimator_riccati_on, linearized_riccati_through,
};
use spinmag::total_covariance::{
    design_field_variance, mismatch_covariance, mismatch_factors, steady_gain_covariance,
    MismatchRegime, Propagation,
};
use spinmag::{DesignParams, PlantParams, Priors};

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
}

#[derive(Default)]
struct Suite {
    outcomes: Vec<Outcome>,
    broken: Vec<String>,
}

impl Suite {
    fn record(&mut self, id: &'static str, pass: bool, detail: String) {
        println!("{id} {}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.outcomes.push(Outcome { id, pass, detail });
    }

    fn require(&mut self, ok: bool, what: String) {
        if !ok {
            println!("  invariant broken: {what}");
            self.broken.push(what);
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn constant_plant() -> PlantParams {
    PlantParams::constant_field(1e6, 1e6, 1e4).unwrap()
}

fn fluctuating(spin: f64) -> PlantParams {
    PlantParams::fluctuating(spin, 1e6, 1e4, 1e5, 1.0).unwrap()
}

fn ac1(s: &mut Suite) {
    let start = Instant::now();
    let times = geometric_grid(1e-8, 1e-4, 20);
    let mut worst: f64 = 0.0;
    // Constant field: numeric vs closed form vs linearized.
    let p = constant_plant();
    let prior = Priors::coherent(p.spin, 1.0).unwrap();
    let num = integrate_estimator_riccati_on(&p, &prior, &times).unwrap();
    let lin = linearized_riccati_through(&p, &prior, &times).unwrap();
    for k in 1..times.len() {
        let b = analytic_sigma_b(&p, &prior, times[k]).unwrap();
        let z = analytic_sigma_z(&p, &prior, times[k]).unwrap();
        for d in [
            rel(num.sigma_b[k], b),
            rel(num.sigma_z[k], z),
            rel(lin[k][(1, 1)], b),
            rel(lin[k][(0, 0)], z),
        ] {
            worst = worst.max(d);
        }
    }
    // Fluctuating field: numeric vs linearized.
    let p = fluctuating(1e6);
    let num = integrate_estimator_riccati_on(&p, &prior, &times).unwrap();
    let lin = linearized_riccati_through(&p, &prior, &times).unwrap();
    for k in 1..times.len() {
        worst = worst
            .max(rel(lin[k][(1, 1)], num.sigma_b[k]))
            .max(rel(lin[k][(0, 0)], num.sigma_z[k]));
        s.require(
            num.sigma_b[k] > 0.0 && num.sigma_z[k] > 0.0,
            format!("AC1 positive variances at t={:e}", times[k]),
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    s.record(
        "AC1",
        worst <= 1e-6 && elapsed < 1.0,
        format!("max relative disagreement {worst:.3e} (tol 1e-6) over t in [1e-8, 1e-4], {elapsed:.2}s (limit 1 s)"),
    );
}

fn ac2(s: &mut Suite) {
    let p = constant_plant();
    let prior = Priors::coherent(p.spin, 1.0).unwrap();
    let times = geometric_grid(1e-7, 1e-4, 20);
    let num = integrate_estimator_riccati_on(&p, &prior, &times).unwrap();
    let xs: Vec<f64> = times[1..].iter().map(|t| t.log10()).collect();
    let ys: Vec<f64> = num.sigma_b[1..].iter().map(|v| v.log10()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let at = integrate_estimator_riccati_on(&p, &prior, &[0.0, 1e-5])
        .unwrap()
        .sigma_b[1];
    let dev = rel(at, 3.0e-13);
    s.record(
        "AC2",
        (slope + 3.0).abs() <= 0.05 && dev <= 0.01,
        format!("log-log slope on [1e-7, 1e-4] = {slope:.4} (want -3.00 +- 0.05); sigma_bR(1e-5) = {at:.4e} (want 3.0e-13 +- 1%, dev {:.3}%)", dev * 100.0),
    );
}

fn ac3(s: &mut Suite) {
    let start = Instant::now();
    let p = fluctuating(1e6);
    let prior = Priors::coherent(p.spin, 1.0).unwrap();
    let cov = integrate_estimator_riccati_on(&p, &prior, &geometric_grid(1e-10, 1e-4, 10)).unwrap();
    let b = *cov.sigma_b.last().unwrap();
    let z = *cov.sigma_z.last().unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let (db, dz) = (rel(b, 9.46e-4), rel(z, 1.06e4));
    s.record(
        "AC3",
        db <= 0.005 && dz <= 0.005 && elapsed < 1.0,
        format!("sigma_bR(100 us) = {b:.4e} (dev {:.3}%), sigma_zR(100 us) = {z:.4e} (dev {:.3}%), tol 0.5%, {elapsed:.2}s", db * 100.0, dz * 100.0),
    );
}

fn ac4(s: &mut Suite) {
    let start = Instant::now();
    let p = fluctuating(1e6);
    let prior = Priors::coherent(p.spin, 1.0).unwrap();
    let d = DesignParams::matched(&p, 0.1).unwrap();
    let design = LoopDesign::new(&p, &prior, &d, GainMode::Dynamic, 2e-12, 1e-7).unwrap();
    let summary = run_ensemble(2000, 1, 4, 1, |rng| {
        run_closed_loop_with(&p, &prior, &design, rng)
    })
    .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let reference = &design.covariance.as_ref().unwrap().sigma_b;
    s.require(
        summary.sigma_be.iter().all(|v| v.is_finite() && *v >= 0.0),
        "AC4 finite ensemble".into(),
    );
    let pointwise = summary
        .sigma_be
        .iter()
        .zip(reference)
        .skip(1)
        .map(|(e, r)| rel(*e, *r))
        .fold(0.0, f64::max);
    // 20 bins of 5 ns: ratio of bin sums.
    let bin = 2500;
    let binned = (0..summary.t.len() / bin)
        .map(|b| {
            let e: f64 = summary.sigma_be[b * bin..(b + 1) * bin].iter().sum();
            let r: f64 = reference[b * bin..(b + 1) * bin].iter().sum();
            rel(e, r)
        })
        .fold(0.0, f64::max);
    s.record(
        "AC4",
        pointwise <= 0.05 && elapsed < 120.0,
        format!(
            "2000 trials, seed 1: max_t |sigma_bE - sigma_bR|/sigma_bR = {:.2}% (tol 5%); worst 5 ns bin {:.2}%; {elapsed:.1}s on 4 workers",
            pointwise * 100.0,
            binned * 100.0
        ),
    );
}

fn ac5(s: &mut Suite) {
    let p = constant_plant();
    let t = 1e-4;
    let with_z = analytic_sigma_b(&p, &Priors::new(p.spin / 2.0, 1.0).unwrap(), t).unwrap();
    let without_z = analytic_sigma_b(&p, &Priors::new(0.0, 1.0).unwrap(), t).unwrap();
    let wide_b = analytic_sigma_z(&p, &Priors::new(p.spin / 2.0, 1e30).unwrap(), t).unwrap();
    let no_b = analytic_sigma_z(&p, &Priors::new(p.spin / 2.0, 0.0).unwrap(), t).unwrap();
    let (rb, rz) = (with_z / without_z, wide_b / no_b);
    s.record(
        "AC5",
        (rb - 4.0).abs() <= 4e-4 && (rz - 4.0).abs() <= 4e-4,
        format!("sigma_b ratio (sigma_z0 > 0 vs 0) = {rb:.6}, sigma_z ratio (sigma_b0 -> inf vs 0) = {rz:.6} at t = 1e-4 (want 4, tol 1e-4 rel)"),
    );
}

fn ac6(s: &mut Suite) {
    let jp = 1e6;
    let times = geometric_grid(1e-13, 1e-4, 100);
    let mut worst_ctrl: f64 = 0.0;
    let mut worst_free: f64 = 0.0;
    for f in [0.5, 0.75, 1.0, 1.25, 2.0, 10.0, 100.0] {
        let p = fluctuating(f * jp);
        let prior = Priors::coherent(p.spin, 1.0).unwrap();
        let ctrl = DesignParams::new(jp, 0.1).unwrap();
        let rows = mismatch_covariance(&p, &prior, &ctrl, &times, Propagation::Exact).unwrap();
        let ss = spinmag::riccati::steady_state_gains(&p, &ctrl)
            .unwrap()
            .sigma_bs;
        let factor = rows.last().unwrap().sigma_be / ss;
        worst_ctrl = worst_ctrl.max(rel(
            factor,
            mismatch_factors(f, MismatchRegime::ControlledSteady).unwrap(),
        ));

        let free = DesignParams::new(jp, 0.0).unwrap();
        let rows = mismatch_covariance(&p, &prior, &free, &times, Propagation::Exact).unwrap();
        let got = rows.last().unwrap().sigma_be;
        let want = if f == 1.0 {
            ss
        } else {
            mismatch_factors(f, MismatchRegime::UncontrolledFluctuating).unwrap()
                * p.sigma_bfree().unwrap()
        };
        worst_free = worst_free.max(rel(got, want));
        s.require(
            rows.iter().all(|r| r.sigma_be >= 0.0),
            format!("AC6 nonnegative error at f={f}"),
        );
    }
    s.record(
        "AC6",
        worst_ctrl <= 0.02 && worst_free <= 0.02,
        format!(
            "controlled (1+f)/(2f) worst dev {:.3}%, uncontrolled (1-f)^2 sigma_bFree worst dev {:.3}% (f = 1 against sigma_bS), tol 2%",
            worst_ctrl * 100.0,
            worst_free * 100.0
        ),
    );
}

fn ac7(s: &mut Suite) {
    let jp = 1e6;
    let t_ref = 1e-5;
    let mut times = geometric_grid(1e-14, 1e-4, 100);
    let at = times.partition_point(|&t| t < t_ref);
    if times[at] != t_ref {
        times.insert(at, t_ref);
    }
    let mut parts = Vec::new();
    let mut pass = true;
    for f in [0.75, 1.0, 1.25, 2.0, 10.0, 100.0, 1000.0] {
        let p = PlantParams::constant_field(f * jp, 1e6, 1e4).unwrap();
        let prior = Priors::coherent(p.spin, 1.0).unwrap();
        let d = DesignParams::new(jp, 1.0).unwrap();
        let rows = mismatch_covariance(&p, &prior, &d, &times, Propagation::Exact).unwrap();
        let reference = design_field_variance(&p, &prior, &d, &times).unwrap();
        let factor = rows[at].sigma_be / reference[at];
        let dev = rel(
            factor,
            mismatch_factors(f, MismatchRegime::ControlledTransient).unwrap(),
        );
        pass &= dev <= 0.10;
        parts.push(format!("f={f}: {:.1}%", dev * 100.0));
    }
    let flagged = matches!(
        mismatch_factors(0.5, MismatchRegime::ControlledTransient),
        Err(spinmag::Error::OutOfValidity(_))
    );
    s.record(
        "AC7",
        pass && flagged,
        format!(
            "transient factor deviation at t = 1e-5 (tol 10%): {}; f = 1/2 flagged: {flagged}",
            parts.join(", ")
        ),
    );
}

fn ac8(s: &mut Suite) {
    let times = geometric_grid(1e-12, 1e-4, 50);
    let mut parts = Vec::new();
    let mut pass = true;
    for gb in [1e3, 1e4, 1e5] {
        let p = PlantParams::fluctuating(1e6, 1e6, 1e4, gb, 1.0).unwrap();
        let prior = Priors::coherent(p.spin, 1.0).unwrap();
        let d = DesignParams::matched(&p, 0.0).unwrap();
        let steady = steady_gain_covariance(&p, &prior, &d, &times).unwrap();
        let dynamic = mismatch_covariance(&p, &prior, &d, &times, Propagation::Exact).unwrap();
        let min_ratio = steady
            .iter()
            .zip(&dynamic)
            .skip(1)
            .map(|(a, b)| a.sigma_be / b.sigma_be)
            .fold(f64::INFINITY, f64::min);
        let end = rel(
            steady.last().unwrap().sigma_be,
            dynamic.last().unwrap().sigma_be,
        );
        pass &= min_ratio >= 1.0 - 1e-9 && end <= 0.05;
        parts.push(format!(
            "gamma_b={gb:e}: min steady/dynamic {min_ratio:.12}, end dev {:.2e}",
            end
        ));
    }
    s.record("AC8", pass, parts.join("; "));
}

fn ac9(s: &mut Suite) {
    let p = fluctuating(1e6);
    let d = DesignParams::matched(&p, 1.0).unwrap();
    let cf = char_freqs(&p, &d).unwrap();
    let ratio = cf.closure_ratio();
    let closure_ok = (ratio / 2.0 - 1.0).abs() <= 0.05;

    let (j_min, j_max, omega_q, omega_1, gamma) = (1e5, 1e6, 1e11, 1e6, 1e6);
    let design = design_robust_controller(j_min, j_max, omega_q, omega_1, None, gamma).unwrap();
    let grid = log_grid(design.omega_l / 10.0, 10.0 * design.omega_q, 4000);
    let w1 = design.weight();
    let mut worst: f64 = 0.0;
    let mut failing = 0;
    for j in log_grid(j_min, j_max, 25) {
        match sensitivity_norm(&design.c, j, gamma, &w1, &grid) {
            Ok(pk) => {
                worst = worst.max(pk.value);
                failing += usize::from(pk.value >= 1.0);
            }
            Err(e) => s.require(false, format!("AC9 loop at J={j:e}: {e}")),
        }
    }
    let lhs = design.w10 * design.omega_1;
    let rhs = omega_q * j_min / j_max;
    let tradeoff_ok = lhs == rhs || rel(lhs, rhs) <= 1e-15;
    s.record(
        "AC9",
        closure_ok && worst < 1.0 && tradeoff_ok,
        format!(
            "omega_C/omega_H = {ratio:.4} (want 2 +- 5%); max ||W1 S|| over 25 J = {worst:.4} ({failing} of 25 >= 1); W10 omega_1 = {lhs:.6e} vs omega_Q J_min/J_max = {rhs:.6e}"
        ),
    );
}

fn ac10(s: &mut Suite) {
    let start = Instant::now();
    let cfg = OracleConfig::default();
    let reports = run_all(&cfg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{} {:.4} (tol {}){}",
                r.name,
                r.statistic,
                r.tolerance,
                if r.pass { "" } else { " FAIL" }
            )
        })
        .collect();
    s.record(
        "AC10",
        reports.iter().all(|r| r.pass) && elapsed < 300.0,
        format!(
            "J=10, M=1e4, {} trajectories: {}; {elapsed:.1}s",
            cfg.trajectories,
            parts.join(", ")
        ),
    );
}

fn ac11(s: &mut Suite) {
    let mc = Scenario::from_toml_str(
        "J = 1e6\ngamma = 1e6\nM = 1e4\ngamma_b = 1e5\nsigma_bF = 2e5\nsigma_b0 = 1.0\nlambda = 0.1\ndt = 2e-12\nT = 2e-9\ntrials = 64\nstride = 10",
    )
    .unwrap();
    let mm = Scenario::from_toml_str(
        "J = 1e6\ngamma = 1e6\nM = 1e4\nsigma_b0 = 1.0\nlambda = 1.0\nmode = \"transient\"\nf_sweep = [0.5, 2.0]\nT = 1e-5\nt_first = 1e-12\nper_decade = 10",
    )
    .unwrap();
    let rc = Scenario::from_toml_str(
        "J = 1e6\ngamma = 1e6\nM = 1e4\nsigma_b0 = 1.0\nT = 1e-4\nt_first = 1e-8",
    )
    .unwrap();
    let qs = Scenario::from_toml_str("J = 3.0\ngamma = 1.0\nM = 1e4\ntrials = 8\nrecords = 2\ngrid_points = 9\nstep_fraction = 1e-2").unwrap();
    let bytes = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut out = Vec::new();
        f(&mut out);
        out
    };
    let mut checks = Vec::new();
    for workers in [1, 4] {
        let o = RunOptions { seed: 7, workers };
        checks.push((
            "montecarlo",
            bytes(&|b| cmd_montecarlo(&mc, o, b, &mut Vec::new()).unwrap()),
        ));
        checks.push((
            "qsme-verify",
            bytes(&|b| {
                let _ = cmd_qsme_verify(&qs, o, b, &mut Vec::new(), None);
            }),
        ));
    }
    for _ in 0..2 {
        checks.push((
            "mismatch",
            bytes(&|b| cmd_mismatch(&mm, b, &mut Vec::new()).unwrap()),
        ));
        checks.push((
            "riccati",
            bytes(&|b| cmd_riccati(&rc, b, &mut Vec::new()).unwrap()),
        ));
    }
    let mut same = true;
    for name in ["montecarlo", "qsme-verify", "mismatch", "riccati"] {
        let runs: Vec<&Vec<u8>> = checks
            .iter()
            .filter(|c| c.0 == name)
            .map(|c| &c.1)
            .collect();
        let ok = runs.windows(2).all(|w| w[0] == w[1]) && !runs[0].is_empty();
        s.require(ok, format!("AC11 {name} output differs between runs"));
        same &= ok;
    }
    s.record(
        "AC11",
        same,
        "repeated runs (and 1 vs 4 workers) of montecarlo, qsme-verify, mismatch and riccati emit identical CSV bytes".into(),
    );
}

type Criterion = (&'static str, fn(&mut Suite));

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| a.starts_with("AC"))
        .collect();
    let criteria: [Criterion; 11] = [
        ("AC1", ac1),
        ("AC2", ac2),
        ("AC3", ac3),
        ("AC4", ac4),
        ("AC5", ac5),
        ("AC6", ac6),
        ("AC7", ac7),
        ("AC8", ac8),
        ("AC9", ac9),
        ("AC10", ac10),
        ("AC11", ac11),
    ];
    let mut suite = Suite::default();
    for (id, run) in criteria {
        if filter.is_empty() || filter.iter().any(|f| f == id) {
            run(&mut suite);
        }
    }
    let passed = suite.outcomes.iter().filter(|o| o.pass).count();
    println!(
        "acceptance: {passed}/{} criteria pass",
        suite.outcomes.len()
    );
    for o in suite.outcomes.iter().filter(|o| !o.pass) {
        println!("  failing: {} ({})", o.id, o.detail);
    }
    if suite.broken.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
