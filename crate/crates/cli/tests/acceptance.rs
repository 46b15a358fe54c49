//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and exits
//! non-zero when any criterion fails.
//!
//! The real MSDialog-Intent criterion runs when the file is found at
//! `$MSDIALOG_PATH` or `data/MSDialog-Intent.json`.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestCaseError, TestRunner};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::Value;

use common::{core_data, ok, repo, run_pipeline, Pipeline};
use intent_core::contextualize::contextualize;
use intent_core::corpus::{ingest_corpus, Conversation, FieldMapConfig, UtteranceKey};
use intent_core::curation::{curate_text, normalize, remove_stopwords, tokenize, CurationConfig};
use intent_core::eval::{auc_roc, confusion, metrics, LabelCounts};
use intent_core::features::Lexicons;
use intent_core::model::gradcheck::run_trials;
use intent_core::model::{argmax, named_rng, softmax, train, Head, TrainConfig};
use intent_core::pipeline::{curate_corpus, featurize, label_corpus, prepare, LexiconShape};
use intent_core::split::{split_conversations, SplitSize, SplitSpec};
use intent_core::synthetic::{synthetic_corpus, SyntheticSpec};
use intent_core::taxonomy::{label_distribution, Category, ConsolidationMap, IntentLabeling};
use intent_core::util::sha256_hex;

const SEED: u64 = 20240601;
const TAGS: [&str; 12] = [
    "OQ", "RQ", "CQ", "FQ", "PA", "PF", "NF", "IR", "FD", "GG", "JK", "O",
];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

struct Criterion {
    name: &'static str,
    budget: Option<Duration>,
    run: fn() -> Result<Outcome, String>,
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn read_json(path: &std::path::Path) -> Result<Value, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{}: {e}", path.display()))
}

// Independent formulas, written out from the definitions.
fn oracle_metrics(tp: usize, fp: usize, fn_: usize, tn: usize) -> [f64; 4] {
    let div = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = div(tp, tp + fp);
    let recall = div(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    [div(tp + tn, tp + fp + fn_ + tn), precision, recall, f1]
}

fn metric_oracle() -> Result<Outcome, String> {
    let mut rng = named_rng(SEED, "metric-oracle");
    let mut worst = 0.0f64;
    for set in 0..1000 {
        let n = rng.random_range(1..=500);
        let labels = rng.random_range(1..=12);
        // vary the label density so that empty classes and 0/0 cases occur
        let density = rng.random_range(0.0..=1.0);
        let rows = |rng: &mut dyn rand::RngCore| -> Vec<Vec<bool>> {
            (0..n)
                .map(|_| (0..labels).map(|_| rng.random_bool(density)).collect())
                .collect()
        };
        let preds = rows(&mut rng);
        let targets = rows(&mut rng);
        let counts = confusion(&preds, &targets, labels).map_err(|e| e.to_string())?;
        let mut pooled = [0usize; 4];
        for l in 0..labels {
            let mut c = [0usize; 4];
            for i in 0..n {
                let slot = match (preds[i][l], targets[i][l]) {
                    (true, true) => 0,
                    (true, false) => 1,
                    (false, true) => 2,
                    (false, false) => 3,
                };
                c[slot] += 1;
            }
            let got = counts.per_label[l];
            ensure([got.tp, got.fp, got.fn_, got.tn] == c, || {
                format!("set {set} label {l}: counts {got:?}, recount {c:?}")
            })?;
            for k in 0..4 {
                pooled[k] += c[k];
            }
            let m = metrics(&got);
            let expect = oracle_metrics(c[0], c[1], c[2], c[3]);
            for (a, b) in [m.accuracy, m.precision, m.recall, m.f1].iter().zip(expect) {
                worst = worst.max((a - b).abs());
            }
        }
        let p = counts.pooled();
        ensure([p.tp, p.fp, p.fn_, p.tn] == pooled, || {
            format!("set {set}: pooled counts differ")
        })?;
        let m = metrics(&LabelCounts {
            tp: pooled[0],
            fp: pooled[1],
            fn_: pooled[2],
            tn: pooled[3],
        });
        let expect = oracle_metrics(pooled[0], pooled[1], pooled[2], pooled[3]);
        for (a, b) in [m.accuracy, m.precision, m.recall, m.f1].iter().zip(expect) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, || format!("max metric deviation {worst:e}"))?;
    Ok(Outcome::Pass(format!(
        "1000 sets, counts exact, max metric deviation {worst:.1e}"
    )))
}

fn auc_oracle() -> Result<Outcome, String> {
    let mut rng = named_rng(SEED, "auc-oracle");
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < 200 {
        let n = rng.random_range(2..=200);
        // coarse scores give plenty of ties
        let levels = rng.random_range(1..=50);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
            .collect();
        let targets: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
        let pos: Vec<f64> = scores
            .iter()
            .zip(&targets)
            .filter(|(_, t)| **t)
            .map(|(s, _)| *s)
            .collect();
        let neg: Vec<f64> = scores
            .iter()
            .zip(&targets)
            .filter(|(_, t)| !**t)
            .map(|(s, _)| *s)
            .collect();
        if pos.is_empty() || neg.is_empty() {
            ensure(auc_roc(&scores, &targets).is_err(), || {
                "single-class AUC must be undefined".into()
            })?;
            continue;
        }
        let mut wins = 0.0;
        for p in &pos {
            for q in &neg {
                wins += if p > q {
                    1.0
                } else if p == q {
                    0.5
                } else {
                    0.0
                };
            }
        }
        let brute = wins / (pos.len() * neg.len()) as f64;
        let got = auc_roc(&scores, &targets).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute).abs());
        done += 1;
    }
    ensure(worst <= 1e-9, || format!("max AUC deviation {worst:e}"))?;
    Ok(Outcome::Pass(format!("200 instances, max deviation {worst:.1e}")))
}

fn softmax_suite() -> Result<Outcome, String> {
    let p = softmax(&[1.0, 2.0, 3.0]).map_err(|e| e.to_string())?;
    for (a, b) in p.iter().zip([0.09003, 0.24473, 0.66524]) {
        ensure((a - b).abs() <= 1e-5, || format!("softmax([1,2,3]) = {p:?}"))?;
    }
    let mut rng = named_rng(SEED, "softmax");
    for _ in 0..2000 {
        let len = rng.random_range(1..=16);
        let x: Vec<f64> = (0..len).map(|_| rng.random_range(-100.0..100.0)).collect();
        let c = rng.random_range(-500.0..500.0);
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let p = softmax(&x).map_err(|e| e.to_string())?;
        let q = softmax(&shifted).map_err(|e| e.to_string())?;
        let sum: f64 = p.iter().sum();
        ensure((sum - 1.0).abs() <= 1e-9, || format!("sum {sum} for {x:?}"))?;
        for (a, b) in p.iter().zip(&q) {
            ensure((a - b).abs() <= 1e-9, || format!("shift by {c} moved {x:?}"))?;
        }
        ensure(argmax(&p) == argmax(&x), || format!("argmax changed for {x:?}"))?;
    }
    Ok(Outcome::Pass("[1,2,3] case and 2000 random vectors".into()))
}

fn gradient_check() -> Result<Outcome, String> {
    let mut rng = named_rng(SEED, "gradcheck");
    let mut lines = Vec::new();
    for head in [Head::Linear, Head::Attention] {
        let s = run_trials(head, 100, &mut rng).map_err(|e| e.to_string())?;
        ensure(s.max_parameters <= 200, || {
            format!("{head}: {} parameters", s.max_parameters)
        })?;
        ensure(s.max_relative_error < 1e-4, || {
            format!("{head}: max relative error {:e}", s.max_relative_error)
        })?;
        lines.push(format!(
            "{head} {} models max rel err {:.1e}",
            s.trials, s.max_relative_error
        ));
    }
    Ok(Outcome::Pass(lines.join(", ")))
}

fn load_corpus(path: &std::path::Path) -> Result<Vec<Conversation>, String> {
    let bytes = std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let (corpus, _) = ingest_corpus(&bytes, &FieldMapConfig::default()).map_err(|e| e.to_string())?;
    Ok(corpus)
}

fn synthetic_training() -> Result<Outcome, String> {
    let err = |e: intent_core::Error| e.to_string();
    let corpus = load_corpus(&repo().join("data/synthetic_corpus.json"))?;
    let utterances: usize = corpus.iter().map(|c| c.utterances.len()).sum();
    ensure(utterances == 500, || format!("{utterances} utterances"))?;
    let config_json =
        std::fs::read_to_string(repo().join("configs/train_synthetic.json")).map_err(|e| e.to_string())?;
    let config = TrainConfig::from_json(&config_json).map_err(err)?;
    ensure(
        config.head == Head::Linear
            && config.batch_size == 16
            && config.learning_rate == 5e-5 * 100.0
            && config.adam_epsilon == 1e-8
            && config.epochs == 5,
        || format!("unexpected synthetic config {config:?}"),
    )?;

    let map = ConsolidationMap::default();
    let lexicons = Lexicons::load_dir(&core_data("lexicons")).map_err(err)?;
    let clean = curate_corpus(&corpus, &CurationConfig::default());
    let ids: Vec<&str> = corpus.iter().map(|c| c.conversation_id.as_str()).collect();
    let spec = SplitSpec {
        test: SplitSize::Count(15),
        validation: SplitSize::Count(15),
        seed: config.seed,
    };
    let split = split_conversations(&ids, &spec).map_err(err)?;
    ensure(
        (split.train.len(), split.validation.len(), split.test.len()) == (70, 15, 15),
        || "split is not 70/15/15".into(),
    )?;
    let featurized = featurize(&clean, &split, &lexicons).map_err(err)?;
    let labelings = label_corpus(&corpus, &map).map_err(err)?;
    let records = contextualize(&corpus, &clean, &featurized.bundles, &labelings).map_err(err)?;
    let prepared = prepare(
        &records,
        &featurized.bundles,
        &featurized.vocabulary,
        &LexiconShape::of(&lexicons),
        &split,
        &map,
        &config,
    )
    .map_err(err)?;
    ensure(prepared.dataset.label_space.len() == 5, || {
        "expected 5 consolidated intents".into()
    })?;
    let model = train(&prepared.dataset, &config).map_err(err)?;
    let last = model.history.last().ok_or("no epochs")?;
    ensure(last.valid_accuracy >= 0.95, || {
        format!("validation accuracy {}", last.valid_accuracy)
    })?;
    ensure(last.train_loss <= 0.2 && last.valid_loss <= 0.2, || {
        format!("final losses {:.4} / {:.4}", last.train_loss, last.valid_loss)
    })?;
    Ok(Outcome::Pass(format!(
        "valid accuracy {:.3}, train loss {:.4}, valid loss {:.4}",
        last.valid_accuracy, last.train_loss, last.valid_loss
    )))
}

fn determinism() -> Result<Outcome, String> {
    let corpus = repo().join("data/synthetic_corpus.json");
    let config = repo().join("configs/train_synthetic.json");
    let pipeline = Pipeline {
        corpus: &corpus,
        train_config: &config,
        split: &["--test-count", "15", "--valid-count", "15"],
    };
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    run_pipeline(&pipeline, a.path())?;
    run_pipeline(&pipeline, b.path())?;
    let read =
        |dir: &tempfile::TempDir, f: &str| std::fs::read(dir.path().join(f)).map_err(|e| format!("{f}: {e}"));
    let metrics = "evaluate/metrics.json";
    ensure(read(&a, metrics)? == read(&b, metrics)?, || {
        "metric reports differ".into()
    })?;
    let (ha, hb) = (
        sha256_hex(&read(&a, "train/model.json")?),
        sha256_hex(&read(&b, "train/model.json")?),
    );
    ensure(ha == hb, || format!("checkpoint hashes {ha} and {hb}"))?;
    Ok(Outcome::Pass(format!(
        "metrics.json identical, checkpoint sha256 {}",
        &ha[..16]
    )))
}

/// Recounts a label distribution from raw tag lists and the map alone.
fn check_distribution(utterances: &[Vec<String>], map: &ConsolidationMap) -> Result<(), String> {
    let labelings: Vec<IntentLabeling> = utterances
        .iter()
        .map(|t| IntentLabeling::new(t, map))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let dist = label_distribution(&labelings);
    let sets: Vec<BTreeSet<&str>> = utterances
        .iter()
        .map(|t| t.iter().map(String::as_str).collect())
        .collect();
    ensure(dist.utterances == utterances.len(), || {
        "utterance count changed".into()
    })?;

    let all_tags: BTreeSet<&str> = sets.iter().flatten().copied().collect();
    let pairs: usize = sets.iter().map(BTreeSet::len).sum();
    ensure(dist.tag_counts.values().sum::<usize>() == pairs, || {
        "tag occurrences not preserved".into()
    })?;
    for a in &all_tags {
        let count = sets.iter().filter(|s| s.contains(a)).count();
        ensure(dist.tag_counts.get(*a) == Some(&count), || format!("tag {a}"))?;
        for b in &all_tags {
            let both = sets.iter().filter(|s| s.contains(a) && s.contains(b)).count();
            ensure(dist.co_occurrence(a, b) == both, || {
                format!("co-occurrence {a},{b}")
            })?;
            ensure(dist.co_occurrence(a, b) == dist.co_occurrence(b, a), || {
                format!("asymmetry {a},{b}")
            })?;
        }
    }
    for c in Category::ALL {
        let count = sets
            .iter()
            .filter(|s| {
                if s.is_empty() {
                    c == Category::NoInformation
                } else {
                    s.iter().any(|t| map.mapping[*t] == c)
                }
            })
            .count();
        ensure(
            dist.category_counts.get(&c).copied().unwrap_or(0) == count,
            || {
                format!(
                    "category {c}: {:?} vs recount {count}",
                    dist.category_counts.get(&c)
                )
            },
        )?;
    }
    // every utterance lands in at least one category, and in no more than it has tags
    for (l, s) in labelings.iter().zip(&sets) {
        ensure(
            !l.categories.is_empty() && l.categories.len() <= s.len().max(1),
            || format!("categories {:?} for tags {s:?}", l.categories),
        )?;
    }
    Ok(())
}

fn corpus_tags(corpus: &[Conversation]) -> Vec<Vec<String>> {
    corpus
        .iter()
        .flat_map(|c| c.utterances.iter().map(|u| u.raw_tags.to_vec()))
        .collect()
}

fn taxonomy_integrity() -> Result<Outcome, String> {
    let map = ConsolidationMap::default();
    let fixture = load_corpus(&repo().join("data/fixture_corpus.json"))?;
    check_distribution(&corpus_tags(&fixture), &map).map_err(|e| format!("fixture: {e}"))?;
    // labelings built through the corpus path agree with the raw recount
    let via_corpus = label_corpus(&fixture, &map).map_err(|e| e.to_string())?;
    ensure(via_corpus.len() == corpus_tags(&fixture).len(), || {
        "fixture labelings lost".into()
    })?;

    let mut rng = named_rng(SEED, "taxonomy");
    let mut utterances = 0;
    for i in 0..100 {
        let spec = SyntheticSpec {
            conversations: rng.random_range(1..=30),
            turns: rng.random_range(2..=8),
            ..SyntheticSpec::default()
        };
        let corpus = synthetic_corpus(&spec, &mut rng);
        // extra random tags make multi-label utterances
        let mut tags = corpus_tags(&corpus.conversations);
        for t in &mut tags {
            if rng.random_bool(0.4) {
                t.push(TAGS.choose(&mut rng).unwrap().to_string());
            }
            if rng.random_bool(0.05) {
                t.clear();
            }
        }
        utterances += tags.len();
        check_distribution(&tags, &map).map_err(|e| format!("random corpus {i}: {e}"))?;
    }
    Ok(Outcome::Pass(format!(
        "fixture and 100 random corpora ({utterances} utterances) exact"
    )))
}

fn curation_properties() -> Result<Outcome, String> {
    let config = CurationConfig::default();
    let mut runner = TestRunner::new(ProptestConfig {
        cases: 10_000,
        failure_persistence: None,
        rng_algorithm: proptest::test_runner::RngAlgorithm::ChaCha,
        ..ProptestConfig::default()
    });
    let strings = prop_oneof![
        "[a-zA-Z0-9 ,.!?'\\-]{0,80}",
        "\\PC{0,60}",
        "(how|do|i|the|reset|my|https://x\\.y/z|www\\.a\\.b|`code`|```x```|Windows|won't|e-mail|laptop's|!!|\\n| ){0,16}",
    ];
    runner
        .run(&strings, |s| {
            let key = UtteranceKey::new("c", "u");
            let once = curate_text(key.clone(), &s, &config);
            let twice = curate_text(key, &once.normalized_text, &config);
            prop_assert_eq!(&once.normalized_text, &twice.normalized_text);
            prop_assert_eq!(&once.tokens, &twice.tokens);
            prop_assert_eq!(&once.lemmas, &twice.lemmas);

            let tokens = tokenize(&normalize(&s, &config.normalization_patterns));
            let (kept, removed) = remove_stopwords(&tokens, &config.stopword_list);
            prop_assert_eq!(kept.len() + removed.len(), tokens.len());
            let removed_at: BTreeMap<usize, &String> = removed.iter().map(|(i, t)| (*i, t)).collect();
            let mut kept_iter = kept.iter();
            for (i, t) in tokens.iter().enumerate() {
                match removed_at.get(&i) {
                    Some(r) => prop_assert_eq!(*r, t),
                    None => prop_assert_eq!(kept_iter.next(), Some(t)),
                }
            }
            if kept_iter.next().is_some() {
                return Err(TestCaseError::fail("kept tokens out of order"));
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(Outcome::Pass("10000 random strings".into()))
}

fn msdialog_path() -> Option<PathBuf> {
    if let Some(p) = std::env::var_os("MSDIALOG_PATH") {
        // cargo runs tests from the crate directory; relative paths are
        // more likely meant from the workspace root
        let p = PathBuf::from(p);
        return Some(if p.is_relative() && !p.exists() {
            repo().join(p)
        } else {
            p
        });
    }
    let default = repo().join("data/MSDialog-Intent.json");
    default.is_file().then_some(default)
}

fn msdialog() -> Result<Outcome, String> {
    let Some(path) = msdialog_path() else {
        return Ok(Outcome::Skip("dataset not supplied (set MSDIALOG_PATH)".into()));
    };
    let root = repo().join("target/msdialog-benchmark");
    let _ = std::fs::remove_dir_all(&root);
    let config = repo().join("configs/train.json");
    let pipeline = Pipeline {
        corpus: &path,
        train_config: &config,
        split: &[],
    };
    let dirs = run_pipeline(&pipeline, &root)?;
    let stats: Value =
        serde_json::from_slice(&ok(&["stats", "--in", dirs[0].to_str().unwrap(), "--json"]).stdout)
            .map_err(|e| e.to_string())?;
    let conversations = stats["conversation_count"].as_u64().unwrap_or(0);
    let tags = stats["tag_vocabulary"].as_object().map_or(0, |m| m.len());
    let metrics = read_json(&dirs[5].join("metrics.json"))?;
    let summary = format!(
        "{conversations} conversations, {tags} tags, subset accuracy {:.4}, micro F1 {:.4}, macro AUC {}",
        metrics["subset_accuracy"].as_f64().unwrap_or(f64::NAN),
        metrics["micro"]["f1"].as_f64().unwrap_or(f64::NAN),
        metrics["macro_auc_roc"]
    );
    ensure(conversations == 2199, || summary.clone())?;
    ensure(tags == 12, || summary.clone())?;
    Ok(Outcome::Pass(format!(
        "{summary}; artifacts in {}",
        root.display()
    )))
}

fn main() -> ExitCode {
    let criteria = [
        Criterion {
            name: "metric-formula oracle",
            budget: Some(Duration::from_secs(10)),
            run: metric_oracle,
        },
        Criterion {
            name: "AUC oracle",
            budget: Some(Duration::from_secs(10)),
            run: auc_oracle,
        },
        Criterion {
            name: "softmax suite",
            budget: Some(Duration::from_secs(1)),
            run: softmax_suite,
        },
        Criterion {
            name: "gradient check",
            budget: Some(Duration::from_secs(60)),
            run: gradient_check,
        },
        Criterion {
            name: "synthetic training",
            budget: Some(Duration::from_secs(60)),
            run: synthetic_training,
        },
        Criterion {
            name: "determinism",
            budget: None,
            run: determinism,
        },
        Criterion {
            name: "taxonomy integrity",
            budget: None,
            run: taxonomy_integrity,
        },
        Criterion {
            name: "curation properties",
            budget: None,
            run: curation_properties,
        },
        Criterion {
            name: "MSDialog-Intent",
            budget: Some(Duration::from_secs(15 * 60)),
            run: msdialog,
        },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for c in &criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = match (c.run)() {
            Ok(o) => o,
            Err(e) => Outcome::Fail(e),
        };
        let elapsed = start.elapsed();
        let outcome = match (outcome, c.budget) {
            (Outcome::Pass(d), Some(b)) if elapsed > b => Outcome::Fail(format!(
                "{d}; took {:.2}s, budget {}s",
                elapsed.as_secs_f64(),
                b.as_secs()
            )),
            (o, _) => o,
        };
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Skip(d) => ("SKIP", d),
            Outcome::Fail(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:<22} {:>8.2}s  {detail}", c.name, elapsed.as_secs_f64());
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criteria failed");
        ExitCode::FAILURE
    }
}
