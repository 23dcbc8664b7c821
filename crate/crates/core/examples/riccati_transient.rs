//! Estimator covariance for a constant field: numeric, closed form and
//! block-exponential solutions side by side, and the t^-3 transient.

use spinmag::numerics::geometric_grid;
use spinmag::riccati::{
    analytic_sigma_b, integrate_estimator_riccati_on, linearized_riccati_through,
};
use spinmag::{PlantParams, Priors};

fn main() -> spinmag::Result<()> {
    let p = PlantParams::constant_field(1e6, 1e6, 1e4)?;
    let prior = Priors::coherent(p.spin, 1.0)?;
    let times = geometric_grid(1e-8, 1e-4, 4);
    let num = integrate_estimator_riccati_on(&p, &prior, &times)?;
    let lin = linearized_riccati_through(&p, &prior, &times)?;

    println!(
        "{:>10} {:>14} {:>14} {:>14} {:>14}",
        "t", "numeric", "closed form", "linearized", "12 sM/(gJ)^2 t^3"
    );
    for (k, &t) in times.iter().enumerate().skip(1) {
        let limit = 12.0 * p.sigma_m() / (p.gamma_j().powi(2) * t.powi(3));
        println!(
            "{t:>10.3e} {:>14.6e} {:>14.6e} {:>14.6e} {limit:>14.6e}",
            num.sigma_b[k],
            analytic_sigma_b(&p, &prior, t)?,
            lin[k][(1, 1)],
        );
    }
    Ok(())
}
