//! Small-spin master-equation filter checked against the Gaussian reduction.
//! Takes about half a minute with `--release`.

use spinmag::qsme::verify::{run_all, OracleConfig};

fn main() -> spinmag::Result<()> {
    let cfg = OracleConfig::default();
    for r in run_all(&cfg)? {
        println!(
            "{:<22} statistic {:.4}  tolerance {}  {}",
            r.name,
            r.statistic,
            r.tolerance,
            if r.pass { "pass" } else { "FAIL" }
        );
        println!("  {}", r.detail);
    }
    Ok(())
}
