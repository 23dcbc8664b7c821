//! Loop shaping for a plant gamma J / s with J known only to a factor of ten.

use spinmag::freq::{design_robust_controller, log_grid, sensitivity_norm};

fn main() -> spinmag::Result<()> {
    let (j_min, j_max, gamma) = (1e5, 1e6, 1e6);
    let design = design_robust_controller(j_min, j_max, 1e11, 1e6, None, gamma)?;
    println!(
        "W10 = {:.3e}, omega_H = {:.3e}, omega_L = {:.3e}",
        design.w10, design.omega_h, design.omega_l
    );
    println!(
        "W10 omega_1 = {:.3e} = omega_Q J_min / J_max",
        design.w10 * design.omega_1
    );

    let grid = log_grid(design.omega_l / 10.0, 10.0 * design.omega_q, 4000);
    for j in log_grid(j_min, j_max, 6) {
        let peak = sensitivity_norm(&design.c, j, gamma, &design.weight(), &grid)?;
        println!(
            "J = {j:.3e}  ||W1 S|| = {:.4} at {:.2} omega_H",
            peak.value,
            peak.omega / design.omega_h
        );
    }
    Ok(())
}
