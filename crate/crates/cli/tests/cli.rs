use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn painvas(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_painvas")).args(args).output().unwrap()
}

fn write_config(dir: &Path) -> String {
    let cfg = serde_json::json!({
        "cohort": {"synthetic": {"config": {"n_persons": 6, "sequences_per_person": 3, "min_len": 20, "max_len": 26}, "seed": 2}},
        "split": {"n_train": 4, "seed": 1},
        "alphas": [0, 1],
        "repetitions": 2,
        "regressor": {"hidden": 3, "head_units": 3, "ffn_hidden": 4, "rmsprop": {"epochs": 1}},
        "hcrf": {"num_states": 3, "lambda_grid": [], "lbfgs": {"max_iterations": 20}}
    });
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    path.display().to_string()
}

fn s(p: &Path) -> String {
    p.display().to_string()
}

#[test]
fn generate_writes_a_loadable_cohort() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("cohort");
    let res = painvas(&["generate", "--config", &cfg, "--seed", "9", "--out", &s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.as_array().unwrap().len(), 6);
}

#[test]
fn train_then_infer_from_saved_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let art = dir.path().join("train");
    let res = painvas(&["train", "--config", &cfg, "--first-stage", "ffn", "--out", &s(&art)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(art.join("hcrf.json").exists() && art.join("manifest.json").exists());

    let inf = dir.path().join("infer");
    let res = painvas(&["infer", "--config", &cfg, "--artifacts", &s(&art), "--out", &s(&inf)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let preds: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(inf.join("predictions_alpha_1.json")).unwrap()).unwrap();
    let persons = preds.as_array().unwrap();
    assert_eq!(persons.len(), 2);
    assert!(persons.iter().all(|p| p["predictions"].as_array().unwrap().len() == 2));
}

#[test]
fn experiment_is_reproducible_from_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let first = dir.path().join("run1");
    let res = painvas(&["experiment", "--config", &cfg, "--first-stage", "gt-pspi", "--seed", "4", "--out", &s(&first)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for f in ["report.json", "summary.csv", "per_person_mae.csv", "confusion_alpha_0.csv", "confusion_alpha_1.csv"] {
        assert!(first.join(f).exists(), "{f}");
    }

    let second = dir.path().join("run2");
    let manifest = s(&first.join("manifest.json"));
    let res = painvas(&["experiment", "--config", &manifest, "--out", &s(&second)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        fs::read_to_string(first.join("report.json")).unwrap(),
        fs::read_to_string(second.join("report.json")).unwrap()
    );
}

#[test]
fn eval_pspi_reports_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let out = dir.path().join("eval");
    let res = painvas(&["eval-pspi", "--config", &cfg, "--first-stage", "gt-pspi", "--out", &s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("pspi_eval.json")).unwrap()).unwrap();
    assert_eq!(report["mae"].as_f64(), Some(0.0));
}

#[test]
fn failures_exit_nonzero_with_stage_tag() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"cohort": {"manifest": {"path": "/nonexistent/manifest.json"}}}"#).unwrap();
    let res = painvas(&["experiment", "--config", &s(&bad), "--out", &s(&dir.path().join("x"))]);
    assert!(!res.status.success());
    let stderr = String::from_utf8_lossy(&res.stderr);
    assert!(stderr.contains("[data]"), "{stderr}");

    let res = painvas(&["train", "--first-stage", "svr"]);
    assert!(!res.status.success());

    let res = painvas(&["train", "--config", &s(&dir.path().join("missing.json"))]);
    assert!(!res.status.success());
    assert!(String::from_utf8_lossy(&res.stderr).contains("[config]"));
}
