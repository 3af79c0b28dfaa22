use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_opcomp");

fn default_config() -> String {
    fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.ini")).unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("OPCOMP_OUT_DIR").output().unwrap()
}

fn write_cfg(dir: &Path, text: &str) -> String {
    let p = dir.join("cfg.ini");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn validate_default_config_ok() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &default_config());
    let out = run(&["--config", &cfg, "validate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("ok"));
}

#[test]
fn missing_required_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let text: String = default_config()
        .lines()
        .filter(|l| !l.trim_start().starts_with("mu0"))
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = write_cfg(dir.path(), &text);
    let out = run(&["--config", &cfg, "validate"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[system].mu0"), "stderr: {err}");
    assert_eq!(err.trim().lines().count(), 1, "error must be a single line");
}

#[test]
fn unknown_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &format!("{}\n[system]\nbogus = 1\n", default_config()));
    let out = run(&["--config", &cfg, "validate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[system].bogus"));
}

#[test]
fn override_supersedes_file_value() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &default_config());
    let out_dir = dir.path().join("a");
    // beta = 0.1 violates the price floor, so the override must have landed.
    let out = run(&[
        "--config", &cfg,
        "--set", "beta=0.1",
        "--out", out_dir.to_str().unwrap(),
        "validate",
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn assumption_violation_gates_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &default_config());
    let out_dir = dir.path().join("sim");
    let args = [
        "--config", &cfg,
        "--set", "prices.beta=0.1",
        "--set", "sim.n_slots=200",
        "--out", out_dir.to_str().unwrap(),
    ];
    let out = run(&[&args[..], &["simulate"]].concat());
    assert_eq!(out.status.code(), Some(3));
    assert!(!out_dir.join("metrics.csv").exists());

    // The flag bypasses the gate; the run may still fail numerically (the
    // violated price floor is exactly what makes the solve well-posed), but
    // it must get past the assumption check.
    let out = run(&[&args[..], &["--allow-invalid", "simulate"]].concat());
    assert_ne!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &default_config());
    let mut bytes = Vec::new();
    for sub in ["a", "b"] {
        let out_dir = dir.path().join(sub);
        let out = run(&[
            "--config", &cfg,
            "--set", "sim.n_slots=500",
            "--set", "sim.seed=42",
            "--out", out_dir.to_str().unwrap(),
            "simulate", "--trace",
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let m = fs::read(out_dir.join("metrics.csv")).unwrap();
        let t = fs::read(out_dir.join("trace.csv")).unwrap();
        bytes.push((m, t));
    }
    assert_eq!(bytes[0], bytes[1]);
}

#[test]
fn sweep_csv_has_expected_schema() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "\n[sweep]\nbetas = 15\nseeds = 1\nn_slots = 400\n";
    let base: String = default_config()
        .lines()
        .filter(|l| {
            let t = l.trim_start();
            !(t.starts_with("betas") || t.starts_with("seeds"))
        })
        .map(|l| format!("{l}\n"))
        .collect();
    let cfg = write_cfg(dir.path(), &format!("{base}{extra}"));
    let out_dir = dir.path().join("sw");
    let out = run(&["--config", &cfg, "--out", out_dir.to_str().unwrap(), "sweep"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# opcomp-csv v1 sweep"));
    assert_eq!(
        lines.next().unwrap(),
        "policy,beta,gamma,eta_or_kappa,avg_power_per_user,interruption_prob,overflow_prob,combined_cost,pr_comp,occupancy_bits,seed,n_slots"
    );
    // One seed row plus mean and stderr aggregates.
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1].contains(",-1,"));
    assert!(rows[2].contains(",-2,"));
}

#[test]
fn cache_opt_csv_has_q_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), &default_config());
    let out_dir = dir.path().join("co");
    let out = run(&[
        "--config", &cfg,
        "--set", "n_urp=50",
        "--out", out_dir.to_str().unwrap(),
        "cache-opt",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("cache_opt.csv")).unwrap();
    let header = text.lines().nth(1).unwrap();
    assert_eq!(header, "iter,u_window_avg,occupancy_bits,q_1,q_2,q_3,q_4,q_5,q_6");
    let data_rows = text.lines().filter(|l| !l.starts_with('#')).count();
    assert_eq!(data_rows, 51); // header + 50 iterations
}
