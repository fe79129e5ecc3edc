use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn coupletime(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coupletime"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("COUPLETIME_OUT")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn mgf_writes_tables_and_manifest() {
    let dir = scratch("mgf");
    let cfg = write_config(&dir, r#"{"replicates": 500, "alpha_grid": [1.0]}"#);
    let out = dir.join("out");
    let o = coupletime(&["--config", &cfg, "mgf"], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("mgf.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("alpha,b,closed_form,quadrature,mc_estimate,mc_se"));
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(row[0], 1.0);
    assert!((row[2] - row[3]).abs() < 1e-8 * row[2]);
    assert!(out.join("mgf.svg").exists());
    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "mgf");
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);
    assert!(manifest["outputs"]["mgf.csv"].is_string());
}

#[test]
fn alpha_override_replaces_the_grid() {
    let dir = scratch("alpha");
    let cfg = write_config(&dir, r#"{"replicates": 200}"#);
    let out = dir.join("out");
    let o = coupletime(&["--config", &cfg, "mgf", "--alpha", "0.5", "2"], &out);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(out.join("mgf.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn invalid_inputs_exit_with_code_two() {
    let dir = scratch("invalid");
    let out = dir.join("out");
    assert_eq!(coupletime(&["mgf", "--alpha", "0"], &out).status.code(), Some(2));
    assert_eq!(coupletime(&["mgf", "--alpha", "-1"], &out).status.code(), Some(2));
    assert_eq!(coupletime(&["--workers", "0", "mgf"], &out).status.code(), Some(2));

    let cfg = write_config(&dir, r#"{"unknown_field": 1}"#);
    assert_eq!(coupletime(&["--config", &cfg, "mgf"], &out).status.code(), Some(2));

    let cfg = write_config(&dir, r#"{"t_grid": []}"#);
    assert_eq!(coupletime(&["--config", &cfg, "maximal-compare"], &out).status.code(), Some(2));

    let cfg = write_config(&dir, r#"{"bkr_start": [0.0, 0.0], "bkr_runs": 1}"#);
    let o = coupletime(&["--config", &cfg, "bkr"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("unsupported start"));
}

#[test]
fn paths_is_reproducible_for_a_seed() {
    let dir = scratch("paths");
    let cfg = write_config(&dir, r#"{"path_horizon": 1.0}"#);
    let (a, b, c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    for (out, seed) in [(&a, "5"), (&b, "5"), (&c, "6")] {
        assert!(coupletime(&["--config", &cfg, "--seed", seed, "paths"], out).status.success());
    }
    let read = |d: &Path| std::fs::read(d.join("paths_coupling.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    for f in ["levy.csv", "paths_coupling.svg", "levy.svg", "paths_bkr.svg"] {
        assert!(a.join(f).exists(), "{f}");
    }
}

#[test]
fn environment_overrides_output_directory() {
    let dir = scratch("env");
    let cfg = write_config(&dir, r#"{"replicates": 100, "alpha_grid": [1.0]}"#);
    let o = Command::new(env!("CARGO_BIN_EXE_coupletime"))
        .args(["--config", &cfg, "--out", dir.join("ignored").to_str().unwrap(), "mgf"])
        .env("COUPLETIME_OUT", dir.join("chosen"))
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(dir.join("chosen").join("mgf.csv").exists());
    assert!(!dir.join("ignored").exists());
}
