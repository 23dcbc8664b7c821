//! Closed-loop Monte Carlo ensemble compared with the Riccati prediction.
//! Run with `--release`.

use spinmag::ensemble::run_ensemble;
use spinmag::lqg_filter::{run_closed_loop_with, GainMode, LoopDesign};
use spinmag::{DesignParams, PlantParams, Priors};

fn main() -> spinmag::Result<()> {
    let p = PlantParams::fluctuating(1e6, 1e6, 1e4, 1e5, 1.0)?;
    let prior = Priors::coherent(p.spin, 1.0)?;
    let d = DesignParams::matched(&p, 0.1)?;
    let design = LoopDesign::new(&p, &prior, &d, GainMode::Dynamic, 2e-12, 5e-8)?;

    let stride = 2500;
    let summary = run_ensemble(400, 1, 4, stride, |rng| {
        run_closed_loop_with(&p, &prior, &design, rng)
    })?;
    let riccati = &design.covariance.as_ref().unwrap().sigma_b;

    println!(
        "{:>10} {:>12} {:>10} {:>12}",
        "t", "sigma_bE", "+-", "sigma_bR"
    );
    for (k, t) in summary.t.iter().enumerate() {
        println!(
            "{t:>10.2e} {:>12.4e} {:>10.2e} {:>12.4e}",
            summary.sigma_be[k],
            summary.sigma_be_se[k],
            riccati[k * stride]
        );
    }
    Ok(())
}
