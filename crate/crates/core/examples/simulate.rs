//! One closed-loop run: truth field, filter estimate and control.

use spinmag::lqg_filter::{run_closed_loop, GainMode};
use spinmag::{DesignParams, PlantParams, Priors, RngStream};

fn main() -> spinmag::Result<()> {
    let p = PlantParams::fluctuating(1e6, 1e6, 1e4, 1e5, 1.0)?;
    let prior = Priors::coherent(p.spin, 1.0)?;
    let d = DesignParams::matched(&p, 0.1)?;
    let mut rng = RngStream::new(42);
    let run = run_closed_loop(&p, &prior, &d, GainMode::Dynamic, &mut rng, 2e-12, 1e-7)?;

    let tr = &run.trajectory;
    for k in (0..tr.len()).step_by(5000) {
        println!(
            "t = {:.2e}  b = {:>9.5}  b~ = {:>9.5}  u = {:>9.5}",
            tr.t[k], tr.b[k], run.b_tilde[k], tr.u[k]
        );
    }
    Ok(())
}
