use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = "mu = 1.0\nsigma = 1.0\nq = 2.0\nbeta = 1.2\n";

fn reference() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/reference.toml")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn divcap(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_divcap"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .unwrap()
}

fn small_sim(cap: &str) -> String {
    format!("{BASE}{cap}\n[sim]\ndt = 0.01\nn_paths = 2000\nseed = 7\n")
}

#[test]
fn solve_writes_report_and_grid() {
    let out = TempDir::new().unwrap();
    let o = divcap(&reference(), out.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["regime"], "NoInjection");
    assert!(report["b_d"].as_f64().unwrap() > 0.0);
    let grid = std::fs::read_to_string(out.path().join("value_grid.csv")).unwrap();
    let mut lines = grid.lines();
    assert_eq!(lines.next(), Some("x,v_d,v_c,v,v_prime,rate"));
    assert_eq!(lines.count(), 201);
}

#[test]
fn missing_key_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", "mu = 1.0\nq = 2.0\nbeta = 1.2\n[cap]\nkind = \"constant\"\ncoefficients = [1.0]\n");
    let o = divcap(&cfg, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sigma"));
}

#[test]
fn bad_coefficients_name_the_key() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &format!("{BASE}[cap]\nkind = \"affine\"\ncoefficients = [1.0]\n"));
    let o = divcap(&cfg, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cap.coefficients"));
}

#[test]
fn json_configs_are_accepted() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"mu": 1.0, "sigma": 1.0, "q": 2.0, "beta": 1.2, "cap": {"kind": "constant", "coefficients": [1.5]}}"#,
    );
    let o = divcap(&cfg, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn zero_cap_pays_nothing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &format!("{BASE}[cap]\nkind = \"constant\"\ncoefficients = [0.0]\n"));
    let o = divcap(&cfg, dir.path(), &["solve"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["regime"], "NoInjection");
    let grid = std::fs::read_to_string(dir.path().join("value_grid.csv")).unwrap();
    for line in grid.lines().skip(1) {
        let v: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(v.abs() < 1e-12, "{line}");
    }
}

#[test]
fn verify_without_simulation_skips_monte_carlo() {
    let out = TempDir::new().unwrap();
    let o = divcap(&reference(), out.path(), &["verify", "--no-sim"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(o.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().any(|l| l.starts_with("SKIP mc.")));
    assert!(stdout.lines().any(|l| l.starts_with("SKIP domination.")));
    assert!(!stdout.lines().any(|l| l.starts_with("FAIL")));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.path().join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn coarse_tolerance_fails_residual_checks_by_name() {
    let dir = TempDir::new().unwrap();
    let body = format!("{BASE}[cap]\nkind = \"affine\"\ncoefficients = [1.0, 0.5]\n[numerics]\ntol = 0.5\ngrid_n = 1\n");
    let cfg = write_config(&dir, "c.toml", &body);
    let o = divcap(&cfg, dir.path(), &["verify", "--no-sim"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL ode.if_residual"));
}

#[test]
fn simulate_is_reproducible_for_a_seed() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &small_sim("[cap]\nkind = \"affine\"\ncoefficients = [1.0, 0.5]"));
    let run = |sub: &str, extra: &[&str]| {
        let out = dir.path().join(sub);
        let mut args = vec!["simulate", "--strategy", "reflected", "--x0", "0.3"];
        args.extend_from_slice(extra);
        let o = divcap(&cfg, &out, &args);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("simulate.json")).unwrap()
    };
    let a = run("a", &[]);
    assert_eq!(a, run("b", &[]));
    assert_ne!(a, run("c", &["--seed", "8"]));
}

#[test]
fn refracted_from_zero_is_ruined_at_once() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &small_sim("[cap]\nkind = \"constant\"\ncoefficients = [1.0]"));
    let o = divcap(&cfg, dir.path(), &["simulate", "--strategy", "refracted", "--barrier", "0.2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(r["estimate"]["mean"].as_f64(), Some(0.0));
    assert_eq!(r["closed_form"].as_f64(), Some(0.0));
    assert_eq!(r["laplace_tau0"]["lower"]["mean"].as_f64(), Some(1.0));
}

#[test]
fn trace_lists_every_step_of_the_first_paths() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &small_sim("[cap]\nkind = \"constant\"\ncoefficients = [1.0]"));
    let o = divcap(&cfg, dir.path(), &["simulate", "--strategy", "reflected", "--barrier", "0.2", "--x0", "0.5", "--trace", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let mut lines = trace.lines();
    assert_eq!(lines.next(), Some("path_id,t,state,rate,injection_increment"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.iter().any(|r| r[0] == 1.0));
    assert!(rows.iter().all(|r| r[2] >= 0.0 && r[4] >= 0.0));
    assert_eq!(rows[0], vec![0.0, 0.0, 0.5, 1.0, 0.0]);
}

#[test]
fn negative_initial_surplus_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "c.toml", &small_sim("[cap]\nkind = \"constant\"\ncoefficients = [1.0]"));
    let o = divcap(&cfg, dir.path(), &["simulate", "--strategy", "reflected", "--x0", "-1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_reports_each_value() {
    let out = TempDir::new().unwrap();
    let o = divcap(&reference(), out.path(), &["sweep", "--param", "beta", "--values", "0.5,1.1,3.0"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[1].contains("beta"));
    assert!(lines[3].contains("NoInjection"));
}
