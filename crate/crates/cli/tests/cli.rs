use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adol"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    bin().arg("--config").arg(config).arg("--out").arg(out).args(args).output().unwrap()
}

fn ok(o: Output) -> String {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

/// A small case-1 run: 40 days of history and 4 test days.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    let path = dir.join("small.json");
    let text = format!(
        r#"{{
  "version": 1,
  "case": 1,
  "seed": 4,
  "data": {{ "kind": "synthetic", "seed": 2, "start": "2015-11-22T00:00:00", "hours": 1056 }},
  "sampler": {{ "sample_count": 300 }},
  "surrogate": {{ "hidden": [16], "train": {{ "iterations": 300 }} }},
  "forecaster": {{ "epochs": 2 }},
  "scenarios": {{ "count": 2, "losses": ["adol", "mse"] }}{extra}
}}"#
    );
    std::fs::write(&path, text).unwrap();
    path
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn reference_sweep_finds_the_reserve_optimum() {
    let out = tempfile::tempdir().unwrap();
    let stdout = ok(run(&configs().join("case1_reference.json"), out.path(), &["sweep"]));
    assert!(stdout.contains("minimum at -13.0%"), "{stdout}");
    let csv = std::fs::read_to_string(out.path().join("sweep.csv")).unwrap();
    assert!(csv.starts_with("# config_hash="));
    assert_eq!(csv.lines().count(), 2 + 401);
    let summary = json(&out.path().join("sweep_summary.json"));
    assert!((summary["argmin_error_pct"].as_f64().unwrap() + 13.0).abs() < 0.1 + 1e-9);
    assert!(summary["increment_at_zero"].as_f64().unwrap() > 0.0);
}

#[test]
fn config_errors_name_the_field_and_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = small_config(dir.path(), r#", "surogate": {}"#);
    let o = run(&bad, dir.path(), &["sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("surogate"));

    let bad = small_config(dir.path(), r#", "sweep": { "step": "fine" }"#);
    let o = run(&bad, dir.path(), &["sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep.step"), "{}", String::from_utf8_lossy(&o.stderr));

    let bad = small_config(dir.path(), r#", "dl_step_fraction": -1"#);
    let o = run(&bad, dir.path(), &["sweep"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("dl_step_fraction"));

    let o = bin().arg("sweep").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().args(["--config", "x.json", "no-such-command"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_inputs_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let o = run(&cfg, &dir.path().join("out"), &["label"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("adol sample"));
    let o = run(&cfg, &dir.path().join("out"), &["evaluate"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn mse_train_and_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    ok(run(&cfg, &out, &["train-forecaster", "--loss", "mse"]));
    let summary = json(&out.join("forecaster_mse_summary.json"));
    assert_eq!(summary["total_solves"], 0);
    assert_eq!(summary["seed"], 4);

    let stdout = ok(run(&cfg, &out, &["evaluate"]));
    assert!(stdout.contains("evaluate mse"), "{stdout}");
    let eval = json(&out.join("eval_mse_summary.json"));
    assert_eq!(eval["instances"], 96);
    assert!(eval["mtdo"].as_f64().unwrap() > 0.0);
    for name in ["eval_mse_instances.csv", "eval_mse_histogram.dat", "forecaster_mse_history.csv"] {
        assert!(std::fs::read_to_string(out.join(name)).unwrap().starts_with("# config_hash="), "{name}");
    }

    ok(run(&cfg, &out, &["report"]));
    let bundle = json(&out.join("report/summary.json"));
    assert!(bundle["stages"]["eval_mse"].is_object());
    assert!(std::fs::read_to_string(out.join("report/report.md")).unwrap().contains("| mse |"));
}

#[test]
fn runs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (out, workers) in [(&a, "1"), (&b, "2")] {
        for stage in [&["sample"][..], &["label"], &["train-forecaster", "--loss", "mse"]] {
            let mut args = vec!["--workers", workers];
            args.extend_from_slice(stage);
            ok(run(&cfg, out, &args));
        }
    }
    for f in ["samples.csv", "records.csv", "forecaster_mse.json", "typical.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    ok(run(&cfg, &c, &["--seed", "5", "sample"]));
    let first = std::fs::read_to_string(c.join("samples.csv")).unwrap();
    assert!(first.contains("seed=5"));
    assert_ne!(first, std::fs::read_to_string(a.join("samples.csv")).unwrap());
}

#[test]
fn scenarios_reuse_one_surrogate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &["scenarios"]);
    assert_eq!(o.status.code(), Some(1), "needs a surrogate first");
    for stage in ["sample", "label", "train-surrogate"] {
        ok(run(&cfg, &out, &[stage]));
    }
    let before = std::fs::read(out.join("surrogate.json")).unwrap();
    let stdout = ok(run(&cfg, &out, &["scenarios"]));
    assert!(stdout.contains("surrogate retrained 0 times"), "{stdout}");
    assert_eq!(std::fs::read(out.join("surrogate.json")).unwrap(), before);
    let summary = json(&out.join("scenarios_summary.json"));
    assert_eq!(summary["surrogate_retrains"], 0);
    assert_eq!(summary["scenarios"], 2);
    let table = std::fs::read_to_string(out.join("scenarios.csv")).unwrap();
    assert_eq!(table.lines().count(), 2 + 4);

    ok(run(&cfg, &out, &["scenarios"]));
    assert_eq!(std::fs::read_to_string(out.join("scenarios.csv")).unwrap(), table);
}
