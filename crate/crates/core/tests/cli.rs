use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn kleinian(args: &[&str], config: Option<&str>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kleinian"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(fixture(c));
    }
    cmd.output().unwrap()
}

fn report(out: &Path, command: &str) -> Value {
    serde_json::from_slice(&std::fs::read(out.join(format!("{command}.json"))).unwrap()).unwrap()
}

fn warnings(r: &Value) -> Vec<String> {
    r["warnings"].as_array().unwrap().iter().map(|w| w.as_str().unwrap().to_owned()).collect()
}

#[test]
fn enumerate_passes_and_writes_ball() {
    let dir = tempfile::tempdir().unwrap();
    let o = kleinian(&["enumerate", "--fixed-clock"], Some("small_schottky.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = report(dir.path(), "enumerate");
    assert_eq!(r["status"], "pass");
    assert!(r["generated_at"].is_null());
    assert_eq!(r["seed"], 3);
    // 4 generators: 1 + 4 + 12 + 36 + ... reduced words, all inside radius 10
    assert!(r["results"]["elements"].as_u64().unwrap() > 17);
    let csv = std::fs::read_to_string(dir.path().join("ball.csv")).unwrap();
    assert_eq!(csv.lines().count() as u64, r["results"]["elements"].as_u64().unwrap() + 1);
}

#[test]
fn seed_flag_overrides_config_and_clock_is_stamped() {
    let dir = tempfile::tempdir().unwrap();
    let o = kleinian(&["enumerate", "--seed", "99"], Some("small_schottky.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path(), "enumerate");
    assert_eq!(r["seed"], 99);
    assert!(r["generated_at"].as_u64().is_some());
}

#[test]
fn bad_configs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["negative_radius.toml", "unknown_field.toml", "missing.toml"] {
        let o = kleinian(&["enumerate"], Some(name), dir.path());
        assert_eq!(o.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("config error"), "{name}: {err}");
    }
    let o = kleinian(&["enumerate"], Some("negative_radius.toml"), dir.path());
    assert!(String::from_utf8_lossy(&o.stderr).contains("budgets.radius"));
    assert!(!dir.path().join("enumerate.json").exists());
}

#[test]
fn cyclic_lemmas_are_partial() {
    let dir = tempfile::tempdir().unwrap();
    let o = kleinian(&["verify-lemmas", "--fixed-clock"], Some("cyclic_lemmas.toml"), dir.path());
    assert_eq!(o.status.code(), Some(3));
    let r = report(dir.path(), "verify-lemmas");
    assert_eq!(r["status"], "partial");
    assert!(warnings(&r).iter().any(|w| w.contains("ping-pong")));
    // the geometric suites still ran
    assert_eq!(r["results"]["four_point"]["cases"], 200);
    assert_eq!(r["results"]["chains"]["counterexamples"], 0);
}

#[test]
fn paper_mode_build_is_partial() {
    let dir = tempfile::tempdir().unwrap();
    let o = kleinian(&["build", "--fixed-clock"], Some("paper_build.toml"), dir.path());
    assert_eq!(o.status.code(), Some(3));
    let r = report(dir.path(), "build");
    assert!(r["results"]["paper_plan"].is_object());
    assert!(warnings(&r).iter().any(|w| w.contains("paper constants")));
}

#[test]
fn failed_check_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = kleinian(&["dimension", "--fixed-clock"], Some("tight_dimension.toml"), dir.path());
    assert_eq!(o.status.code(), Some(4));
    let r = report(dir.path(), "dimension");
    assert_eq!(r["status"], "fail");
    assert!(r["failures"][0].as_str().unwrap().contains("differ by more than"));
    assert_eq!(r["results"]["box_count"]["label"], "box dimension");
    assert!(dir.path().join("boxes.csv").exists());
}

#[test]
fn schottky_deep_search_warns() {
    let dir = tempfile::tempdir().unwrap();
    let o = kleinian(&["deep", "--fixed-clock"], Some("small_schottky.toml"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let r = report(dir.path(), "deep");
    assert_eq!(r["results"]["found"], false);
    assert!(warnings(&r).iter().any(|w| w.contains("no element of depth")));
}

#[test]
fn fixed_clock_reruns_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = kleinian(&["exponent", "--fixed-clock"], Some("small_schottky.toml"), out);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(std::fs::read(a.join("exponent.json")).unwrap(), std::fs::read(b.join("exponent.json")).unwrap());
}
