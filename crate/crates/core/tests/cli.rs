use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use darcy_waves::io::{read_profile_csv, BRANCH_HEADER};

const BASE: &str = r#"
[params]
sigma = 1.0
gravity = 1.0
speed = 1.0
depth = "infinite"

[forcing]
preset = "cos"
kappa = 0.01

[grid]
n = 32
"#;

fn darcy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_darcy-waves")).args(args).env("RUST_LOG", "warn").output().expect("spawn binary")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn manifest(dir: &Path) -> toml::Table {
    fs::read_to_string(dir.join("manifest.toml")).unwrap().parse().unwrap()
}

#[test]
fn small_wave_writes_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("sw");
    let res = darcy(&["small-wave", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["profile.csv", "bulk.csv", "plot.gp", "manifest.toml"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let eta = read_profile_csv(&out.join("profile.csv")).unwrap();
    assert_eq!(eta.n(), 32);
    assert!(eta.sup_norm() > 1e-3 && eta.sup_norm() < 1e-2);
    let m = manifest(&out);
    assert_eq!(m["run"]["termination"].as_str(), Some("converged"));
    assert_eq!(m["config"]["grid"]["n"].as_integer(), Some(32));
    assert!(m["tolerances"]["picard_tol"].as_float().is_some());
}

#[test]
fn short_continuation_writes_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[continuation]\nkappa_max = 0.1\n");
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("branch");
    let res = darcy(&["continue", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let branch = fs::read_to_string(out.join("branch.csv")).unwrap();
    assert_eq!(branch.lines().next(), Some(BRANCH_HEADER));
    assert!(branch.lines().count() >= 3);
    assert!(out.join("profiles/point_0000.csv").exists());
    let script = fs::read_to_string(out.join("plot.gp")).unwrap();
    assert!(script.contains("branch.csv"));
    assert_eq!(manifest(&out)["run"]["termination"].as_str(), Some("KappaRangeExhausted"));
}

#[test]
fn verify_exits_zero_when_all_checks_pass() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("verify");
    let res = darcy(&["verify", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "7"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stdout));
    let table = fs::read_to_string(out.join("verify.csv")).unwrap();
    assert!(table.lines().skip(1).all(|l| l.contains(",true,")));
    assert_eq!(manifest(&out)["run"]["seed"].as_integer(), Some(7));
}

#[test]
fn unwritable_output_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "").unwrap();
    let out = blocker.join("out");
    let res = darcy(&["small-wave", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("output directory"));
}

#[test]
fn invalid_config_and_mode_mismatch_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("speed = 1.0", "speed = 0.0"));
    let res = darcy(&["small-wave", "--config", &cfg, "--out", tmp.path().join("a").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("speed must be nonzero"));

    let cfg = write_config(tmp.path(), &format!("mode = \"evolve\"\n{BASE}"));
    let res = darcy(&["small-wave", "--config", &cfg, "--out", tmp.path().join("b").to_str().unwrap()]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("mode"));
}

#[test]
fn module_failure_is_recorded_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let text = BASE.replace("kappa = 0.01", "kappa = 50.0") + "\n[tolerances]\npicard_max_iter = 20\n";
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("fail");
    let res = darcy(&["small-wave", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(!res.status.success());
    let m = manifest(&out);
    assert_eq!(m["run"]["status"].as_str(), Some("failed"));
    assert!(m["error"]["message"].as_str().is_some());
}
