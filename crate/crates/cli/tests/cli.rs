use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn levygreen(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_levygreen"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("LEVYGREEN_OUT")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn only_run_dir(root: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(root).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

fn csv_bodies(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

const CAUCHY_DISK: &str = r#"{
  "process": {"family": "isotropic-stable", "d": 2, "params": {"alpha": 1.0}},
  "domain": {"balls": [{"center": [0.0, 0.0], "radius": 1.0}]}
}"#;

#[test]
fn green_oracle_on_the_cauchy_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", CAUCHY_DISK);
    let out = tmp.path().join("runs");
    let o = levygreen(&["run", "green-oracle", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(&only_run_dir(&out));
    assert_eq!(s["schema"], 1);
    assert!(s["max_rel_err"].as_f64().unwrap() <= 0.10);
    assert!(s["provenance"]["sources"]["max_rel_err"].as_str().unwrap().contains("estimate_green_mc"));
}

#[test]
fn scaling_audit_passes_for_stable_one_and_a_half() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "c.json",
        r#"{"process": {"family": "isotropic-stable", "d": 2, "params": {"alpha": 1.5}}}"#,
    );
    let out = tmp.path().join("runs");
    let o = levygreen(&["run", "scaling-audit", "--config", cfg.to_str().unwrap()], &out);
    assert!(o.status.success());
    let dir = only_run_dir(&out);
    let s = summary(&dir);
    assert!(s["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let rows = fs::read_to_string(dir.join("sandwich.csv")).unwrap();
    assert_eq!(rows.lines().count(), 62);
}

#[test]
fn repeated_runs_give_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", CAUCHY_DISK);
    let c = cfg.to_str().unwrap();
    let (a, b, sharded) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("s"));
    for (root, shards) in [(&a, "1"), (&b, "1"), (&sharded, "3")] {
        let o = levygreen(&["run", "green-oracle", "--config", c, "--n", "4000", "--seed", "9", "--shards", shards], root);
        assert!(o.status.code().is_some());
    }
    let (da, db, ds) = (only_run_dir(&a), only_run_dir(&b), only_run_dir(&sharded));
    assert_eq!(da.file_name(), db.file_name());
    assert_eq!(da.file_name(), ds.file_name());
    assert!(!csv_bodies(&da).is_empty());
    assert_eq!(csv_bodies(&da), csv_bodies(&db));
    assert_eq!(csv_bodies(&da), csv_bodies(&ds));

    let (m1, m2) = (tmp.path().join("m1"), tmp.path().join("m2"));
    for root in [&m1, &m2] {
        levygreen(&["run", "mc-exit", "--n", "2000", "--dt", "1e-3"], root);
    }
    assert_eq!(csv_bodies(&only_run_dir(&m1)), csv_bodies(&only_run_dir(&m2)));
}

#[test]
fn permuted_and_explicit_configs_hash_alike() {
    let tmp = tempfile::tempdir().unwrap();
    let a = write_config(
        tmp.path(),
        "a.json",
        r#"{"seed": 3, "knobs": {"n": 500, "h": 0.25}, "process": {"params": {"alpha": 1.0}, "d": 2, "family": "isotropic-stable"}}"#,
    );
    let b = write_config(
        tmp.path(),
        "b.json",
        r#"{"process": {"family": "isotropic-stable", "params": {"alpha": 1.0}, "d": 2}, "knobs": {"h": 0.25, "n": 500, "dt": 0.001}, "seed": 3, "kind": "green-oracle"}"#,
    );
    let hash = |p: &Path| {
        let o = levygreen(&["resolve", "green-oracle", "--config", p.to_str().unwrap()], tmp.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        String::from_utf8(o.stdout).unwrap().lines().last().unwrap().to_string()
    };
    assert_eq!(hash(&a), hash(&b));
    let c = write_config(tmp.path(), "c.json", r#"{"seed": 4, "knobs": {"n": 500, "h": 0.25}}"#);
    assert_ne!(hash(&a), hash(&c));
}

#[test]
fn exit_codes_distinguish_usage_and_numeric_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let o = levygreen(&["run", "kato-scan", "--set", "walks=3"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    let reason: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(reason["reason"], "usage");

    // K_r diverges for alpha <= 1
    let cfg = write_config(tmp.path(), "c.json", CAUCHY_DISK);
    let out = tmp.path().join("runs");
    let o = levygreen(&["run", "kato-scan", "--config", cfg.to_str().unwrap()], &out);
    assert_eq!(o.status.code(), Some(3));
    let s = summary(&only_run_dir(&out));
    assert_eq!(s["error"]["reason"], "non-integrable");
    assert_eq!(s["passed"], false);
}

#[test]
fn failing_hard_check_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    // a threshold no Monte Carlo estimate can meet
    let o = levygreen(&["run", "mc-exit", "--n", "500", "--dt", "1e-3", "--set", "threshold=1e-12"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let s = summary(&only_run_dir(tmp.path()));
    let c = s["checks"].as_array().unwrap().iter().find(|c| c["name"] == "exit_moment_rel_err").unwrap();
    assert_eq!(c["pass"], false);
}
