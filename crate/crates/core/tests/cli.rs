use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinmag"))
}

fn scratch(name: &str, body: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("spinmag-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SIM: &str = "J = 1e6\ngamma = 1e6\nM = 1e4\ngamma_b = 1e5\nsigma_bF = 2e5\nsigma_b0 = 1.0\nlambda = 0.1\nT = 2e-9\n";

fn simulate(scenario: &PathBuf, seed: &str, out: &PathBuf) -> Vec<u8> {
    let status = bin()
        .args(["simulate", "--scenario"])
        .arg(scenario)
        .args(["--seed", seed, "--out"])
        .arg(out)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{}",
        String::from_utf8_lossy(&status.stderr)
    );
    assert!(String::from_utf8(status.stdout)
        .unwrap()
        .contains("steps: "));
    std::fs::read(out).unwrap()
}

#[test]
fn simulate_is_reproducible_per_seed() {
    let sc = scratch("sim.toml", SIM);
    let out = sc.with_extension("csv");
    let a = simulate(&sc, "5", &out);
    let b = simulate(&sc, "5", &out);
    let c = simulate(&sc, "6", &out);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("t,z,b,u,z_tilde,b_tilde\n"));
}

#[test]
fn unknown_key_is_a_configuration_error() {
    let sc = scratch("bad.toml", &format!("{SIM}colour = 3\n"));
    let out = bin()
        .args(["riccati", "--scenario"])
        .arg(&sc)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
}

#[test]
fn infeasible_design_exits_nonzero_with_report() {
    let sc = scratch(
        "infeasible.toml",
        "gamma = 1e6\nJ_min = 1e5\nJ_max = 1e6\nomega_Q = 1e11\nomega_1 = 1e6\nomega_L = 1e12\n",
    );
    let out = bin()
        .args(["design", "--scenario"])
        .arg(&sc)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("feasible: false"));
}

#[test]
fn shipped_scenarios_parse() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            spinmag::cli::Scenario::load(&path)
                .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
