//! Estimator/controller designed for J' run on a plant with J = f J': steady
//! error factors against (1 + f) / (2 f).

use spinmag::numerics::geometric_grid;
use spinmag::riccati::steady_state_gains;
use spinmag::total_covariance::{
    mismatch_covariance, mismatch_factors, MismatchRegime, Propagation,
};
use spinmag::{DesignParams, PlantParams, Priors};

fn main() -> spinmag::Result<()> {
    let design_spin = 1e6;
    let d = DesignParams::new(design_spin, 0.1)?;
    let times = geometric_grid(1e-13, 1e-4, 50);

    println!("{:>8} {:>12} {:>12}", "f", "factor", "(1+f)/(2f)");
    for f in [0.5, 0.75, 1.0, 1.25, 2.0, 10.0, 100.0] {
        let p = PlantParams::fluctuating(f * design_spin, 1e6, 1e4, 1e5, 1.0)?;
        let prior = Priors::coherent(p.spin, 1.0)?;
        let rows = mismatch_covariance(&p, &prior, &d, &times, Propagation::Exact)?;
        let matched = steady_state_gains(&p, &d)?.sigma_bs;
        let factor = rows.last().unwrap().sigma_be / matched;
        println!(
            "{f:>8} {factor:>12.5} {:>12.5}",
            mismatch_factors(f, MismatchRegime::ControlledSteady)?
        );
    }
    Ok(())
}
