//! Fluctuating field: the Riccati solution saturates at the steady-state
//! covariance, and the steady gains set the filter bandwidth.

use spinmag::numerics::geometric_grid;
use spinmag::riccati::{integrate_estimator_riccati_on, sigma_bs_approx, steady_state_gains};
use spinmag::{DesignParams, PlantParams, Priors};

fn main() -> spinmag::Result<()> {
    let p = PlantParams::fluctuating(1e6, 1e6, 1e4, 1e5, 1.0)?;
    let d = DesignParams::matched(&p, 1.0)?;
    let prior = Priors::coherent(p.spin, p.sigma_bfree()?)?;

    let steady = steady_state_gains(&p, &d)?;
    println!("K_O = [{:.4e}, {:.4e}]", steady.k_o[0], steady.k_o[1]);
    println!("K_C = [{:.4e}, {:.4e}]", steady.k_c[0], steady.k_c[1]);
    println!(
        "sigma_bS = {:.5e} (large-spin approximation {:.5e})",
        steady.sigma_bs,
        sigma_bs_approx(&p, &d)
    );
    println!("sigma_zS = {:.5e}", steady.sigma_zs);

    let times = geometric_grid(1e-10, 1e-4, 2);
    let cov = integrate_estimator_riccati_on(&p, &prior, &times)?;
    for (t, b) in cov.t.iter().zip(&cov.sigma_b) {
        println!(
            "t = {t:.2e}  sigma_bR = {b:.5e}  ratio to steady {:.4}",
            b / steady.sigma_bs
        );
    }
    Ok(())
}
