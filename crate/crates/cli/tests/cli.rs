use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn clts(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clts"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = clts(dir, args);
    assert!(
        out.status.success(),
        "clts {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn small_task(dir: &Path) -> PathBuf {
    ok(
        dir,
        &[
            "synth-gen", "--out", "task", "--vocab", "300", "--indicative-per-class", "15",
            "--n-source", "300", "--n-unlabeled", "400", "--n-test", "150",
        ],
    );
    dir.join("task/config.json")
}

#[test]
fn run_applies_budget_override() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_task(tmp.path());
    let out = ok(tmp.path(), &["run", "--config", config.to_str().unwrap(), "--budget", "12", "--no-artifacts"]);
    let report: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["budget"], 12);
    for seeds in report["seeds"].as_object().unwrap().values() {
        assert_eq!(seeds.as_array().unwrap().len(), 4);
    }
}

#[test]
fn identical_runs_print_identical_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_task(tmp.path());
    let args = ["run", "--config", config.to_str().unwrap(), "--budget", "9", "--seed", "5"];
    let a = ok(tmp.path(), &args);
    let b = ok(tmp.path(), &args);
    assert_eq!(a, b);
    let dirs: Vec<_> = std::fs::read_dir(tmp.path().join("artifacts")).unwrap().collect();
    assert_eq!(dirs.len(), 1, "one artifacts directory per configuration");
}

#[test]
fn stages_chain_through_the_artifacts_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_task(tmp.path());
    let c = config.to_str().unwrap();
    let common = ["--config", c, "--budget", "12", "--dir", "stages"];
    for stage in ["train-source", "extract-seeds", "translate", "build-teacher", "cotrain", "evaluate"] {
        let mut args = vec![stage];
        args.extend(common);
        ok(tmp.path(), &args);
    }
    let tsv = std::fs::read_to_string(tmp.path().join("stages/seeds.tsv")).unwrap();
    let mut per_class = std::collections::BTreeMap::new();
    for line in tsv.lines().skip(1) {
        *per_class.entry(line.split('\t').next().unwrap().to_string()).or_insert(0) += 1;
    }
    assert_eq!(per_class.len(), 3);
    assert!(per_class.values().all(|&n| n == 4));
    let metrics: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("stages/metrics.json")).unwrap()).unwrap();
    assert!(metrics["student"]["accuracy"].as_f64().unwrap() > 0.5);
}

#[test]
fn stage_without_its_inputs_explains_what_to_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_task(tmp.path());
    let out = clts(tmp.path(), &["cotrain", "--config", config.to_str().unwrap(), "--dir", "empty"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("build-teacher"));
}

#[test]
fn noise_sweep_emits_one_row_per_rate_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_task(tmp.path());
    let out = ok(
        tmp.path(),
        &[
            "noise-sweep", "--config", config.to_str().unwrap(), "--budget", "12", "--kind", "adv",
            "--rates", "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7", "--seeds", "1,2",
        ],
    );
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "kind,rate,seed,teacher_acc,student_acc");
    assert_eq!(lines.len(), 1 + 8 * 2);
    assert!(lines[1..].iter().all(|l| l.starts_with("adv,") && l.split(',').count() == 5));
}

#[test]
fn invalid_usage_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let config = small_task(tmp.path());
    let c = config.to_str().unwrap();
    let zero_rounds = clts(tmp.path(), &["run", "--config", c, "--rounds", "0"]);
    assert!(!zero_rounds.status.success());
    assert!(String::from_utf8_lossy(&zero_rounds.stderr).contains("rounds"));
    assert!(!clts(tmp.path(), &["run", "--config", c, "--budget", "2"]).status.success());
    assert!(!clts(tmp.path(), &["frobnicate"]).status.success());
    assert!(!clts(tmp.path(), &["run"]).status.success());
    assert!(!clts(tmp.path(), &["run", "--config", "missing.json"]).status.success());
}
