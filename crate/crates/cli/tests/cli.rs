use std::path::Path;
use std::process::{Command, Output};

fn mluq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mluq"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

const SMALL: &str = r#"
name = "cli-small"
case = "static_elastic"
uncertainty = "homogeneous"
tolerance = 2e-3
max_level = 2
[sampling]
band_samples = 10
band_level = 0
"#;

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn run_writes_artifacts_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = mluq(&["run", &cfg, "--workers", "2", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "levels.csv", "rates.csv", "bands.csv", "config.echo"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert!(std::fs::read_to_string(out.join("config.echo")).unwrap().contains("seed = 7"));
    let r = mluq(&["rates", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&r.stdout).contains("alpha"));
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &SMALL.replace("tolerance = 2e-3", "tolerance = -1.0"));
    assert_eq!(mluq(&["run", &cfg]).status.code(), Some(2));
    let cfg = write(dir.path(), "unknown.toml", &format!("{SMALL}\nwhatever = 3\n"));
    assert_eq!(mluq(&["run", &cfg]).status.code(), Some(2));
    let good = write(dir.path(), "good.toml", SMALL);
    assert_eq!(mluq(&["run", &good, "--budget", "-1"]).status.code(), Some(2));
}

#[test]
fn exhausted_budget_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("out");
    let o = mluq(&["run", &cfg, "--budget", "1e-9", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("report.csv").is_file());
}

#[test]
fn defaults_lists_six_scenarios() {
    for args in [&["defaults"][..], &["--print-defaults"][..]] {
        let o = mluq(args);
        assert_eq!(o.status.code(), Some(0));
        let text = String::from_utf8(o.stdout).unwrap();
        assert_eq!(text.matches("# --- ").count(), 6);
    }
}
