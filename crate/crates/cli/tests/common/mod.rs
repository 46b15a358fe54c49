#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn core_data(name: &str) -> PathBuf {
    repo().join("crates/core/data").join(name)
}

pub fn intentctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intentctl"))
        .args(args)
        .env_remove("PIPELINE_SEED")
        .output()
        .expect("intentctl runs")
}

/// Runs a command and panics with its stderr when it fails.
pub fn ok(args: &[&str]) -> Output {
    let out = intentctl(args);
    assert!(
        out.status.success(),
        "intentctl {} failed: {}",
        args.join(" "),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub struct Pipeline<'a> {
    pub corpus: &'a Path,
    pub train_config: &'a Path,
    pub split: &'a [&'a str],
}

/// Every stage from ingest to report. Returns the directory of each stage.
pub fn run_pipeline(p: &Pipeline, root: &Path) -> Result<Vec<PathBuf>, String> {
    let dir = |name: &str| root.join(name);
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let field_map = repo().join("configs/field_map.json");
    let mut featurize = vec![
        "featurize".to_string(),
        "--in".into(),
        s(&dir("curate")),
        "--lexicons".into(),
        s(&core_data("lexicons")),
        "--out".into(),
        s(&dir("featurize")),
    ];
    featurize.extend(p.split.iter().map(|a| a.to_string()));
    let steps: Vec<Vec<String>> = vec![
        vec![
            "ingest".into(),
            "--corpus".into(),
            s(p.corpus),
            "--field-map".into(),
            s(&field_map),
            "--out".into(),
            s(&dir("ingest")),
        ],
        vec![
            "curate".into(),
            "--in".into(),
            s(&dir("ingest")),
            "--config".into(),
            s(&core_data("curation.json")),
            "--out".into(),
            s(&dir("curate")),
        ],
        featurize,
        vec![
            "contextualize".into(),
            "--in".into(),
            s(&dir("featurize")),
            "--map".into(),
            s(&core_data("consolidation.json")),
            "--out".into(),
            s(&dir("contextualize")),
        ],
        vec![
            "train".into(),
            "--in".into(),
            s(&dir("contextualize")),
            "--config".into(),
            s(p.train_config),
            "--out".into(),
            s(&dir("train")),
        ],
        vec![
            "evaluate".into(),
            "--model".into(),
            s(&dir("train").join("model.json")),
            "--in".into(),
            s(&dir("train")),
            "--out".into(),
            s(&dir("evaluate")),
        ],
        vec![
            "report".into(),
            "--in".into(),
            s(&dir("evaluate")),
            "--out".into(),
            s(&dir("report")),
        ],
    ];
    let mut dirs = Vec::new();
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let out = intentctl(&args);
        if !out.status.success() {
            return Err(format!(
                "{} failed: {}",
                step[0],
                String::from_utf8_lossy(&out.stderr).trim()
            ));
        }
        dirs.push(PathBuf::from(step.last().unwrap()));
    }
    Ok(dirs)
}
