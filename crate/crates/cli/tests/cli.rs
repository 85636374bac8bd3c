use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

fn galerkin(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_galerkin"));
    cmd.args(args).arg("--out").arg(dir.join("runs"));
    if let Some(text) = config {
        let path = dir.join("run.toml");
        std::fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    let stdout = String::from_utf8_lossy(&out.stdout);
    PathBuf::from(stdout.lines().last().expect("run directory line"))
}

fn verdict(out: &Output) -> Value {
    serde_json::from_str(&std::fs::read_to_string(run_dir(out).join("verdict.json")).unwrap()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn annotated_example_is_the_default_config() {
    let dir = TempDir::new().unwrap();
    let example = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/config.example.toml")).unwrap();
    let out = galerkin(dir.path(), &["check-determining"], Some(&example));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(verdict(&out)["is_determining"], Value::Bool(true));
    let echo = std::fs::read_to_string(run_dir(&out).join("config.echo")).unwrap();
    let bare = galerkin(dir.path(), &["check-determining"], None);
    assert_eq!(std::fs::read_to_string(run_dir(&bare).join("config.echo")).unwrap(), echo);
}

#[test]
fn non_determining_set_exits_with_probe_failure() {
    let dir = TempDir::new().unwrap();
    let out = galerkin(dir.path(), &["check-determining"], Some("forced = [[1, 0, 0]]\n"));
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(verdict(&out)["is_determining"], Value::Bool(false));
    let series = std::fs::read_to_string(run_dir(&out).join("series.csv")).unwrap();
    assert_eq!(series.lines().next(), Some("k1,k2,k3,dim"));
    assert_eq!(series.lines().count(), 14);
}

#[test]
fn forced_mode_outside_the_truncation_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = galerkin(dir.path(), &["check-determining"], Some("N = 1\nforced = [[5, 0, 0]]\n"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("outside the truncation"), "{}", stderr(&out));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn stability_guard_is_quoted() {
    let dir = TempDir::new().unwrap();
    let out = galerkin(dir.path(), &["simulate"], Some("N = 2\ndt = 0.5\nhorizon = 1.0\n"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dt * nu * N^2"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_name_the_key_and_line() {
    let dir = TempDir::new().unwrap();
    let out = galerkin(dir.path(), &["simulate"], Some("N = 1\n\n[steering]\nknots = 4\n"));
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("knots") && err.contains("line 4"), "{err}");
}

#[test]
fn bad_arguments_are_usage_errors() {
    let dir = TempDir::new().unwrap();
    assert_eq!(galerkin(dir.path(), &["no-such-command"], None).status.code(), Some(1));
    assert_eq!(galerkin(dir.path(), &["--help"], None).status.code(), Some(0));
}

#[test]
fn drift_selftest_passes() {
    let dir = TempDir::new().unwrap();
    let out = galerkin(dir.path(), &["drift-selftest"], Some("N = 2\n[selftest]\nsamples = 200\n"));
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v = verdict(&out);
    assert!(v["max_relative_flux"].as_f64().unwrap() <= 1e-12);
    assert!(v["max_bracket_gap"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn mixing_without_determining_noise_reports_the_hypothesis() {
    let dir = TempDir::new().unwrap();
    let out = galerkin(dir.path(), &["mixing"], Some("forced = [[1, 0, 0]]\nensemble = 10\nhorizon = 1.0\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("hypothesis violated"));
    assert_eq!(verdict(&out)["hypothesis_violated"], Value::Bool(true));
}

#[test]
fn simulation_reruns_bit_exactly_from_the_echo() {
    let dir = TempDir::new().unwrap();
    let cfg = "ensemble = 8\nhorizon = 0.5\nstride = 5\n[initial]\nenergy = 2.0\n";
    let first = galerkin(dir.path(), &["simulate"], Some(cfg));
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let a = run_dir(&first);
    let echo = std::fs::read_to_string(a.join("config.echo")).unwrap();
    let second = galerkin(dir.path(), &["simulate"], Some(&echo));
    let b = run_dir(&second);
    assert_ne!(a, b);
    for file in ["verdict.json", "series.csv", "trajectory.csv", "config.echo"] {
        assert_eq!(
            std::fs::read(a.join(file)).unwrap(),
            std::fs::read(b.join(file)).unwrap(),
            "{file} differs"
        );
    }
    let series = std::fs::read_to_string(a.join("series.csv")).unwrap();
    assert_eq!(series.lines().count(), 1 + 11);
}

#[test]
fn steering_result_replays_identically() {
    let dir = TempDir::new().unwrap();
    let cfg = "[initial]\nenergy = 1.0\n[steering]\nrestarts = 2\n";
    let solved = galerkin(dir.path(), &["steer"], Some(cfg));
    assert_eq!(solved.status.code(), Some(0), "{}", stderr(&solved));
    assert_eq!(verdict(&solved)["converged"], Value::Bool(true));
    let stored = run_dir(&solved);
    let replayed = galerkin(dir.path(), &["steer", "--replay", stored.to_str().unwrap()], Some(cfg));
    assert_eq!(replayed.status.code(), Some(0), "{}", stderr(&replayed));
    assert_eq!(verdict(&replayed)["identical"], Value::Bool(true));
}

#[test]
fn ensemble_probes_write_their_series() {
    let dir = TempDir::new().unwrap();
    let lyap = galerkin(dir.path(), &["lyapunov"], Some("horizon = 1.0\n"));
    assert_eq!(lyap.status.code(), Some(0), "{}", stderr(&lyap));
    let series = std::fs::read_to_string(run_dir(&lyap).join("series.csv")).unwrap();
    assert!(series.starts_with("t,v,stderr,envelope,generator_estimate\n"));

    let support = galerkin(dir.path(), &["support"], Some("horizon = 4.0\nensemble = 100\n"));
    assert_eq!(support.status.code(), Some(0), "{}", String::from_utf8_lossy(&support.stdout));

    let rank = galerkin(dir.path(), &["hormander-rank"], Some("[closure]\nnumeric_points = 1\n"));
    assert_eq!(rank.status.code(), Some(0), "{}", stderr(&rank));
    assert_eq!(verdict(&rank)["numeric_ranks"], serde_json::json!([52]));
}
