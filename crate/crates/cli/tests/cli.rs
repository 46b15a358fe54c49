mod common;

use common::{core_data, intentctl, ok, repo, run_pipeline, Pipeline};
use serde_json::Value;

fn synthetic() -> Pipeline<'static> {
    static CORPUS: std::sync::OnceLock<std::path::PathBuf> = std::sync::OnceLock::new();
    static CONFIG: std::sync::OnceLock<std::path::PathBuf> = std::sync::OnceLock::new();
    Pipeline {
        corpus: CORPUS.get_or_init(|| repo().join("data/synthetic_corpus.json")),
        train_config: CONFIG.get_or_init(|| repo().join("configs/train_synthetic.json")),
        split: &["--test-count", "15", "--valid-count", "15"],
    }
}

fn read_json(path: &std::path::Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn stats_on_fixture() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("ingest");
    ok(&[
        "ingest",
        "--corpus",
        repo().join("data/fixture_corpus.json").to_str().unwrap(),
        "--field-map",
        repo().join("configs/field_map.json").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let stats: Value =
        serde_json::from_slice(&ok(&["stats", "--in", out.to_str().unwrap(), "--json"]).stdout).unwrap();
    assert_eq!(stats["conversation_count"], 2);
    assert_eq!(stats["utterance_count"], 9);
}

#[test]
fn evaluate_without_model_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("model.json");
    let out = intentctl(&[
        "evaluate",
        "--model",
        missing.to_str().unwrap(),
        "--in",
        tmp.path().to_str().unwrap(),
        "--out",
        tmp.path().join("eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no model"));
}

#[test]
fn unknown_flag_and_bad_seed_exit_one() {
    assert_eq!(intentctl(&["gradcheck", "--bogus"]).status.code(), Some(1));
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_intentctl"))
        .args(["gradcheck", "--trials", "1"])
        .env("PIPELINE_SEED", "soon")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn gradcheck_passes() {
    let out = ok(&["gradcheck", "--trials", "20", "--json"]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["passed"], true);
}

#[test]
fn default_split_on_small_corpus_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let p = Pipeline {
        split: &[],
        ..synthetic()
    };
    let err = run_pipeline(&p, tmp.path()).unwrap_err();
    assert!(err.starts_with("featurize failed"), "{err}");
    assert!(err.contains("empty split"), "{err}");
}

#[test]
fn pipeline_is_cached_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let dirs = run_pipeline(&synthetic(), a.path()).unwrap();
    run_pipeline(&synthetic(), b.path()).unwrap();
    for file in [
        "train/model.json",
        "evaluate/metrics.json",
        "report/metrics.csv",
        "report/records.csv",
    ] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
    let metrics = read_json(&a.path().join("evaluate/metrics.json"));
    assert_eq!(metrics["examples"], 75);

    // a second run of the same stage is a cache hit
    let train = &dirs[4];
    let manifest = std::fs::read(train.join("manifest.json")).unwrap();
    let args = [
        "train",
        "--in",
        dirs[3].to_str().unwrap(),
        "--config",
        synthetic().train_config.to_str().unwrap(),
        "--out",
        train.to_str().unwrap(),
    ];
    let out = ok(&args);
    assert!(String::from_utf8_lossy(&out.stderr).contains("up to date"));
    assert_eq!(std::fs::read(train.join("manifest.json")).unwrap(), manifest);
    let log = std::fs::read_to_string(train.join("runs.log")).unwrap();
    assert_eq!(log.lines().count(), 2);

    // a changed setting invalidates the cache
    let mut changed = args.to_vec();
    changed.extend(["--head", "attention"]);
    let out = ok(&changed);
    assert!(!String::from_utf8_lossy(&out.stderr).contains("up to date"));
    assert_ne!(std::fs::read(train.join("manifest.json")).unwrap(), manifest);
}

#[test]
fn evaluate_rejects_a_model_from_another_vocabulary() {
    let tmp = tempfile::tempdir().unwrap();
    let dirs = run_pipeline(&synthetic(), tmp.path()).unwrap();
    // refit the features with a different split, then evaluate the old model
    let refit = tmp.path().join("refit");
    ok(&[
        "featurize",
        "--in",
        dirs[1].to_str().unwrap(),
        "--lexicons",
        core_data("lexicons").to_str().unwrap(),
        "--out",
        refit.to_str().unwrap(),
        "--test-count",
        "15",
        "--valid-count",
        "15",
        "--split-seed",
        "9",
    ]);
    let ctx = tmp.path().join("refit-ctx");
    ok(&[
        "contextualize",
        "--in",
        refit.to_str().unwrap(),
        "--map",
        core_data("consolidation.json").to_str().unwrap(),
        "--out",
        ctx.to_str().unwrap(),
    ]);
    let out = intentctl(&[
        "evaluate",
        "--model",
        dirs[4].join("model.json").to_str().unwrap(),
        "--in",
        ctx.to_str().unwrap(),
        "--out",
        tmp.path().join("refit-eval").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different vocabulary"));
}
