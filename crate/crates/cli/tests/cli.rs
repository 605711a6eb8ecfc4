use std::path::Path;
use std::process::{Command, Output};

fn pnavier(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pnavier"))
        .args(args)
        .env_remove("PNAVIER_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let out = dir.join(format!("{name}-out"));
    let text = format!("output_dir = {:?}\n{body}", out.display().to_string());
    let path = dir.join(format!("{name}.toml"));
    std::fs::write(&path, text).unwrap();
    path.display().to_string()
}

const SINGLE_MODE: &str = r#"
p = 2.0
n_basis = 4
t_final = 0.2
quad_order = 12
[initial_data]
kind = "preset"
name = "single_mode"
"#;

const TWO_MODE_P4: &str = r#"
p = 4.0
n_basis = 4
t_final = 0.5
"#;

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn print_defaults_is_a_valid_config() {
    let o = pnavier(&["--print-defaults"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("p = 3.0"));
    assert!(text.contains("[initial_data]"));
}

#[test]
fn simulate_smoke_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_config(dir.path(), "a", SINGLE_MODE);
    let b = write_config(dir.path(), "b", SINGLE_MODE);
    for cfg in [&a, &b] {
        let o = pnavier(&["--threads", "1", "simulate", "--config", cfg]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let out = dir.path().join("a-out");
    for f in ["trace.csv", "snapshots.csv", "summary.json", "energy.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["final_h"].as_f64().unwrap() < summary["h0"].as_f64().unwrap());
    assert!(summary["failure"].is_null());

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    let h: Vec<f64> = trace
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(h.windows(2).all(|w| w[1] < w[0]));
    let other = std::fs::read(dir.path().join("b-out/trace.csv")).unwrap();
    assert_eq!(trace.as_bytes(), other.as_slice());
}

#[test]
fn invalid_p_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad", "p = 1.5");
    let o = pnavier(&["simulate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("p >= 2"), "{}", stderr(&o));
}

#[test]
fn missing_config_is_an_io_error() {
    let o = pnavier(&["simulate", "--config", "/nonexistent/config.toml"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(pnavier(&["simulate"]).status.code(), Some(1));
    assert_eq!(pnavier(&[]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c", SINGLE_MODE);
    let o = pnavier(&["check", "--suite", "bogus", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn inequality_suite_passes_at_p2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "ineq", SINGLE_MODE);
    let o = pnavier(&["check", "--suite", "inequalities", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("ineq-out/check_inequalities.json").exists());
}

#[test]
fn full_suite_on_fresh_simulation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "full", TWO_MODE_P4);
    assert!(pnavier(&["simulate", "--config", &cfg]).status.success());
    let o = pnavier(&["check", "--suite", "all", "--config", &cfg]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(o.status.success(), "{stdout}\n{}", stderr(&o));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn corrupted_snapshots_report_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "corrupt", TWO_MODE_P4);
    assert!(pnavier(&["simulate", "--config", &cfg]).status.success());
    let snap = dir.path().join("corrupt-out/snapshots.csv");
    let text = std::fs::read_to_string(&snap).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[4] = "0.5,not-a-number".into();
    std::fs::write(&snap, lines.join("\n")).unwrap();
    let o = pnavier(&["check", "--suite", "energy", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn sweep_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sweep", SINGLE_MODE);
    let o = pnavier(&["sweep", "--config", &cfg, "--n-list", "4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("sweep-out/sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1);

    let o = pnavier(&["sweep", "--config", &cfg, "--n-list", "4,4"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("sweep-out/sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows, vec!["4,4,0e0"]);
    assert!(dir.path().join("sweep-out/sweep.svg").exists());

    let o = pnavier(&["sweep", "--config", &cfg, "--n-list", "9,4"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn basis_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.txt");
    let o = pnavier(&["basis", "--kind", "stream", "--n", "9", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("pnavier-basis"));
    let o = pnavier(&["basis", "--kind", "spectral", "--n", "6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pnavier(&["basis", "--kind", "stream", "--n", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn output_root_env_redirects_relative_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("rel.toml");
    std::fs::write(&cfg, format!("output_dir = \"run1\"\n{SINGLE_MODE}")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_pnavier"))
        .args(["simulate", "--config", cfg.to_str().unwrap()])
        .env("PNAVIER_OUTPUT_ROOT", dir.path())
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("run1/trace.csv").exists());
}
