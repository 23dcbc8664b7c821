//! Steady closed-loop transfer functions and the characteristic frequencies
//! of the photocurrent-to-control response.

use spinmag::freq::{bode, char_freqs, closed_loop_tfs, log_grid};
use spinmag::{DesignParams, PlantParams};

fn main() -> spinmag::Result<()> {
    let p = PlantParams::fluctuating(1e6, 1e6, 1e4, 1e5, 1.0)?;
    let d = DesignParams::matched(&p, 1.0)?;
    let cf = char_freqs(&p, &d)?;
    println!("omega_L = {:.4e}", cf.omega_l);
    println!("omega_H = {:.4e}", cf.omega_h);
    println!(
        "omega_C = {:.4e} (closure found at {:.4e}, {:.3} omega_H)",
        cf.omega_c,
        cf.omega_c_closure,
        cf.closure_ratio()
    );
    println!("omega_Q = {:.4e}", cf.omega_q);
    println!("G_u DC = {:.4}, AC = {:.4e}", cf.g_u_dc, cf.g_u_ac);

    let g_u = closed_loop_tfs(&p, &d)?.g_u;
    for pt in bode(&g_u, &log_grid(1e3, 1e13, 11))? {
        println!(
            "w = {:.1e}  |G_u| = {:>7.2} dB  phase = {:>8.2} deg",
            pt.omega, pt.mag_db, pt.phase_deg
        );
    }
    Ok(())
}
