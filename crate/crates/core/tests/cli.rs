use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn sparam(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sparam"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sparam-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn simulate_one_time_unit() {
    let dir = scratch("sim");
    let out = sparam(&dir, &["simulate", "--set", "sim.T=1", "--set", "sim.burn_in=0"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("observations.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("n,t,x"));
    assert_eq!(lines.count(), 32);
    assert!(std::fs::read_to_string(dir.join("manifest.txt")).unwrap().contains("[config]"));
}

#[test]
fn estimate_from_file_matches_estimate_from_config() {
    let common = ["--set", "sim.T=200", "--set", "sim.burn_in=10", "--seed", "9"];
    let sim = scratch("compose-sim");
    assert!(sparam(&sim, &[&["simulate"][..], &common].concat()).status.success());
    let input = sim.join("observations.csv");

    let from_file = scratch("compose-file");
    let args = [&["estimate-ct", "--input", input.to_str().unwrap()][..], &common].concat();
    assert!(sparam(&from_file, &args).status.success());
    let direct = scratch("compose-direct");
    assert!(sparam(&direct, &[&["estimate-ct"][..], &common].concat()).status.success());

    let a = std::fs::read_to_string(from_file.join("ct_fit.csv")).unwrap();
    let b = std::fs::read_to_string(direct.join("ct_fit.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn forecast_writes_one_row_per_lead_time() {
    let dir = scratch("forecast");
    let out = sparam(
        &dir,
        &[
            "forecast",
            "--set", "model.family=kramers",
            "--set", "sim.T=2^9",
            "--set", "sim.burn_in=10",
            "--set", "obs.h=1/8",
            "--set", "forecast.n0=10",
            "--set", "forecast.k=40",
        ],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let wide = std::fs::read_to_string(dir.join("rmse_wide.csv")).unwrap();
    let mut lines = wide.lines();
    assert!(lines.next().unwrap().starts_with("k,t,rmse_"));
    assert_eq!(lines.count(), 40);
}

#[test]
fn invalid_config_reports_every_violation() {
    let dir = scratch("bad");
    let out = sparam(&dir, &["simulate", "--set", "model.gamma=-1", "--set", "obs.h=1/3"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error:"), "{err}");
    assert!(err.contains("gamma") && err.contains("h"), "{err}");
    assert!(!dir.join("observations.csv").exists());
}
