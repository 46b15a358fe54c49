use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use intent_core::contextualize::{contextualize, reverse_feature_report, ContextualizedRecord};
use intent_core::corpus::{
    corpus_stats, ingest_corpus, validate_conversation, Conversation, FieldMapConfig, ValidationRules,
};
use intent_core::curation::{CleanUtterance, CurationConfig};
use intent_core::eval::{evaluate, feedback_sentiment_check, FeedbackCheck, MetricsReport};
use intent_core::features::{FeatureBundle, Lexicons, Polarity, Vocabulary, LEXICON_FILES};
use intent_core::model::gradcheck::{run_trials, GradCheckSummary};
use intent_core::model::{
    named_rng, train, train_per_sentiment, Checkpoint, EpochStats, Head, TrainConfig, TrainedModel,
};
use intent_core::pipeline::{build_examples, curate_corpus, featurize, label_corpus, prepare, LexiconShape};
use intent_core::split::{split_conversations, Partition, Split, SplitSize, SplitSpec};
use intent_core::taxonomy::{label_distribution, Category, ConsolidationMap, LabelDistribution};

use crate::failure::{CliResult, Failure};
use crate::store::{parse_json, read_bytes, to_json_bytes, Stage};
use crate::tables;
use crate::{Cli, Command, SplitArgs};

pub const CORPUS: &str = "corpus.json";
pub const INGEST_REPORT: &str = "ingest_report.json";
pub const VALIDATION: &str = "validation.json";
pub const CLEAN: &str = "clean.json";
pub const SPLIT: &str = "split.json";
pub const VOCABULARY: &str = "vocabulary.json";
pub const BUNDLES: &str = "bundles.json";
pub const LEXICON_SHAPE: &str = "lexicon_shape.json";
pub const RECORDS: &str = "records.json";
pub const CONSOLIDATION: &str = "consolidation.json";
pub const DISTRIBUTION: &str = "label_distribution.json";
pub const MODEL: &str = "model.json";
pub const HISTORY: &str = "history.json";
pub const TIMING: &str = "timing.json";
pub const SENTIMENT_HISTORY: &str = "sentiment_history.json";
pub const METRICS: &str = "metrics.json";
pub const METRICS_CSV: &str = "metrics.csv";
pub const FEEDBACK: &str = "feedback_check.json";

const SEED_VAR: &str = "PIPELINE_SEED";
const GRADCHECK_TOLERANCE: f64 = 1e-4;
const ATTRIBUTION_TOP: usize = 20;

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = Ctx {
        from_scratch: cli.from_scratch,
        json: cli.json,
    };
    match &cli.command {
        Command::Ingest {
            corpus,
            field_map,
            out,
        } => ingest(&ctx, corpus, field_map, out),
        Command::Stats { input } => stats(&ctx, input),
        Command::Curate {
            input,
            config,
            out,
            valid_only,
        } => curate(&ctx, input, config, out, *valid_only),
        Command::Featurize {
            input,
            lexicons,
            out,
            split,
        } => featurize_stage(&ctx, input, lexicons, out, split),
        Command::Contextualize { input, map, out } => contextualize_stage(&ctx, input, map, out),
        Command::Train {
            input,
            config,
            out,
            per_sentiment,
            head,
            label_mode,
        } => train_stage(
            &ctx,
            input,
            config,
            out,
            TrainOverrides {
                per_sentiment: *per_sentiment,
                head: *head,
                label_mode: *label_mode,
            },
        ),
        Command::Evaluate { model, input, out } => evaluate_stage(&ctx, model, input, out),
        Command::Report { input, out } => report(&ctx, input, out),
        Command::Gradcheck { trials } => gradcheck(&ctx, *trials),
    }
}

struct Ctx {
    from_scratch: bool,
    json: bool,
}

impl Ctx {
    /// JSON summary on stdout with `--json`, the human text otherwise.
    fn emit(&self, summary: &Value, text: &str) {
        // a closed pipe (`| head`) is not an error worth a panic
        let mut stdout = std::io::stdout().lock();
        let _ = if self.json {
            writeln!(
                stdout,
                "{}",
                serde_json::to_string_pretty(summary).unwrap_or_default()
            )
        } else {
            stdout.write_all(text.as_bytes())
        };
    }
}

fn seed_override() -> CliResult<Option<u64>> {
    match std::env::var(SEED_VAR) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| Failure::config(format!("{SEED_VAR} is not an unsigned integer: {v:?}"))),
        Err(_) => Ok(None),
    }
}

/// Reports a cached stage; `None` means there is nothing left to do.
fn skip_if_fresh(ctx: &Ctx, stage: Stage) -> CliResult<Option<Stage>> {
    if !stage.is_fresh() {
        return Ok(Some(stage));
    }
    eprintln!("{}: up to date in {}", stage.name(), stage.out().display());
    ctx.emit(&json!({"stage": stage.name(), "cached": true}), "");
    stage.finish_cached()?;
    Ok(None)
}

fn ingest(ctx: &Ctx, corpus: &Path, field_map: &Path, out: &Path) -> CliResult<()> {
    let mut stage = Stage::new("ingest", out, ctx.from_scratch);
    let map_bytes = stage.read(field_map, "field map")?;
    let map = FieldMapConfig::from_json(&String::from_utf8_lossy(&map_bytes))?;
    let source = stage.read(corpus, "corpus")?;
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    let (conversations, diagnostics) = ingest_corpus(&source, &map)?;
    for d in &diagnostics.diagnostics {
        log::warn!("{}: {:?}: {}", d.conversation_id, d.kind, d.reason);
    }
    if conversations.is_empty() {
        return Err(Failure::data(format!(
            "no conversation could be ingested from {} entries",
            diagnostics.entries
        )));
    }
    stage.write_json(CORPUS, &conversations)?;
    stage.write_json(INGEST_REPORT, &diagnostics)?;
    let summary = json!({
        "stage": "ingest",
        "entries": diagnostics.entries,
        "conversations": conversations.len(),
        "skipped": diagnostics.skipped(),
        "repaired": diagnostics.diagnostics.len() - diagnostics.skipped(),
    });
    ctx.emit(
        &summary,
        &format!(
            "ingested {} of {} conversations ({} skipped)\n",
            conversations.len(),
            diagnostics.entries,
            diagnostics.skipped()
        ),
    );
    stage.finish(summary)
}

fn read_artifact<T: for<'de> Deserialize<'de>>(stage: &mut Stage, dir: &Path, file: &str) -> CliResult<T> {
    stage.read_json(&dir.join(file), file)
}

fn stats(ctx: &Ctx, input: &Path) -> CliResult<()> {
    let path = input.join(CORPUS);
    let corpus: Vec<Conversation> = parse_json(&read_bytes(&path, "corpus")?, &path)?;
    let stats = corpus_stats(&corpus, &ValidationRules::default())?;
    let value = serde_json::to_value(&stats).map_err(|e| Failure::data(e.to_string()))?;
    ctx.emit(&value, &tables::stats_text(&stats));
    Ok(())
}

/// Reads the curation JSON and the two tables it names, relative to it.
fn load_curation(stage: &mut Stage, path: &Path) -> CliResult<CurationConfig> {
    let bytes = stage.read(path, "curation config")?;
    let value: Value =
        serde_json::from_slice(&bytes).map_err(|e| Failure::config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    for key in ["stopwords", "lemma_exceptions"] {
        if let Some(table) = value.get(key).and_then(Value::as_str) {
            stage.read(&base.join(table), key)?;
        }
    }
    Ok(CurationConfig::load(path)?)
}

fn curate(ctx: &Ctx, input: &Path, config: &Path, out: &Path, valid_only: bool) -> CliResult<()> {
    let mut stage = Stage::new("curate", out, ctx.from_scratch);
    let curation = load_curation(&mut stage, config)?;
    stage.setting("valid_only", valid_only);
    let corpus: Vec<Conversation> = read_artifact(&mut stage, input, CORPUS)?;
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    let rules = ValidationRules::default();
    let invalid: Vec<_> = corpus
        .iter()
        .map(|c| validate_conversation(c, &rules))
        .filter(|v| !v.is_valid())
        .collect();
    let kept: Vec<Conversation> = if valid_only {
        let drop: BTreeSet<&str> = invalid.iter().map(|v| v.conversation_id.as_str()).collect();
        corpus
            .into_iter()
            .filter(|c| !drop.contains(c.conversation_id.as_str()))
            .collect()
    } else {
        corpus
    };
    if kept.is_empty() {
        return Err(Failure::data("no conversation left to curate"));
    }
    let clean = curate_corpus(&kept, &curation);
    stage.write_json(CORPUS, &kept)?;
    stage.write_json(CLEAN, &clean)?;
    stage.write_json(VALIDATION, &invalid)?;
    let summary = json!({
        "stage": "curate",
        "conversations": kept.len(),
        "utterances": clean.len(),
        "invalid_conversations": invalid.len(),
        "tokens": clean.iter().map(|c| c.tokens.len()).sum::<usize>(),
    });
    ctx.emit(
        &summary,
        &format!(
            "curated {} utterances in {} conversations ({} failed validation{})\n",
            clean.len(),
            kept.len(),
            invalid.len(),
            if valid_only { ", dropped" } else { "" }
        ),
    );
    stage.finish(summary)
}

fn split_spec(args: &SplitArgs) -> CliResult<SplitSpec> {
    let default = SplitSpec::default();
    Ok(SplitSpec {
        test: match (args.test_count, args.test_fraction) {
            (Some(n), _) => SplitSize::Count(n),
            (None, Some(f)) => SplitSize::Fraction(f),
            (None, None) => default.test,
        },
        validation: match (args.valid_count, args.valid_fraction) {
            (Some(n), _) => SplitSize::Count(n),
            (None, Some(f)) => SplitSize::Fraction(f),
            (None, None) => default.validation,
        },
        seed: match args.split_seed {
            Some(s) => s,
            None => seed_override()?.unwrap_or(default.seed),
        },
    })
}

fn featurize_stage(ctx: &Ctx, input: &Path, lexicons: &Path, out: &Path, args: &SplitArgs) -> CliResult<()> {
    let mut stage = Stage::new("featurize", out, ctx.from_scratch);
    let mut tables = Vec::with_capacity(LEXICON_FILES.len());
    for name in LEXICON_FILES {
        let bytes = stage.read(&lexicons.join(name), name)?;
        tables.push(String::from_utf8(bytes).map_err(|e| Failure::config(format!("{name}: {e}")))?);
    }
    let lexicons = Lexicons::from_sources(&tables[0], &tables[1], &tables[2], &tables[3], &tables[4])?;
    let spec = split_spec(args)?;
    stage.setting("split", spec);
    let corpus: Vec<Conversation> = read_artifact(&mut stage, input, CORPUS)?;
    let clean: Vec<CleanUtterance> = read_artifact(&mut stage, input, CLEAN)?;
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    let ids: Vec<&str> = corpus.iter().map(|c| c.conversation_id.as_str()).collect();
    let split = split_conversations(&ids, &spec)?;
    let featurized = featurize(&clean, &split, &lexicons)?;
    stage.carry_from(input)?;
    stage.write_json(SPLIT, &split)?;
    stage.write_json(VOCABULARY, &featurized.vocabulary)?;
    stage.write_json(BUNDLES, &featurized.bundles)?;
    stage.write_json(LEXICON_SHAPE, &LexiconShape::of(&lexicons))?;
    let summary = json!({
        "stage": "featurize",
        "train_conversations": split.train.len(),
        "validation_conversations": split.validation.len(),
        "test_conversations": split.test.len(),
        "vocabulary": featurized.vocabulary.len(),
        "bundles": featurized.bundles.len(),
    });
    ctx.emit(
        &summary,
        &format!(
            "split {}/{}/{} conversations (train/validation/test), vocabulary {} terms\n",
            split.train.len(),
            split.validation.len(),
            split.test.len(),
            featurized.vocabulary.len()
        ),
    );
    stage.finish(summary)
}

fn contextualize_stage(ctx: &Ctx, input: &Path, map_path: &Path, out: &Path) -> CliResult<()> {
    let mut stage = Stage::new("contextualize", out, ctx.from_scratch);
    let map_bytes = stage.read(map_path, "consolidation map")?;
    let map = ConsolidationMap::from_json(&String::from_utf8_lossy(&map_bytes))?;
    let corpus: Vec<Conversation> = read_artifact(&mut stage, input, CORPUS)?;
    let clean: Vec<CleanUtterance> = read_artifact(&mut stage, input, CLEAN)?;
    let bundles: Vec<FeatureBundle> = read_artifact(&mut stage, input, BUNDLES)?;
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    let stats = corpus_stats(&corpus, &ValidationRules::default())?;
    for warning in map.check_against(&stats)? {
        log::warn!("{warning}");
    }
    let labelings = label_corpus(&corpus, &map)?;
    let records = contextualize(&corpus, &clean, &bundles, &labelings)?;
    let distribution = label_distribution(labelings.values());
    stage.carry_from(input)?;
    stage.write_json(RECORDS, &records)?;
    stage.write(CONSOLIDATION, &to_json_bytes(&map)?)?;
    stage.write_json(DISTRIBUTION, &distribution)?;
    let summary = json!({
        "stage": "contextualize",
        "records": records.len(),
        "category_counts": distribution.category_counts,
    });
    ctx.emit(&summary, &format!("{} contextualized records\n", records.len()));
    stage.finish(summary)
}

struct TrainOverrides {
    per_sentiment: bool,
    head: Option<Head>,
    label_mode: Option<intent_core::taxonomy::LabelMode>,
}

/// Epoch statistics without wall-clock time, so reruns are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct HistoryRow {
    epoch: usize,
    train_loss: f64,
    valid_loss: f64,
    valid_accuracy: f64,
    valid_argmax_accuracy: f64,
}

impl From<&EpochStats> for HistoryRow {
    fn from(h: &EpochStats) -> Self {
        HistoryRow {
            epoch: h.epoch,
            train_loss: h.train_loss,
            valid_loss: h.valid_loss,
            valid_accuracy: h.valid_accuracy,
            valid_argmax_accuracy: h.valid_argmax_accuracy,
        }
    }
}

impl HistoryRow {
    fn into_stats(self) -> EpochStats {
        EpochStats {
            epoch: self.epoch,
            train_loss: self.train_loss,
            valid_loss: self.valid_loss,
            valid_accuracy: self.valid_accuracy,
            valid_argmax_accuracy: self.valid_argmax_accuracy,
            elapsed_secs: 0.0,
        }
    }
}

fn history_rows(model: &TrainedModel) -> Vec<HistoryRow> {
    model.history.iter().map(HistoryRow::from).collect()
}

fn model_file(polarity: Polarity) -> String {
    format!("model-{polarity}.json")
}

fn train_stage(
    ctx: &Ctx,
    input: &Path,
    config_path: &Path,
    out: &Path,
    overrides: TrainOverrides,
) -> CliResult<()> {
    let mut stage = Stage::new("train", out, ctx.from_scratch);
    let config_bytes = stage.read(config_path, "train config")?;
    let mut config = TrainConfig::from_json(&String::from_utf8_lossy(&config_bytes))?;
    if let Some(head) = overrides.head {
        config.head = head;
    }
    if let Some(mode) = overrides.label_mode {
        config.label_mode = mode;
    }
    if let Some(seed) = seed_override()? {
        config.seed = seed;
    }
    config.validate()?;
    stage.setting("config", &config);
    stage.setting("per_sentiment", overrides.per_sentiment);

    let records: Vec<ContextualizedRecord> = read_artifact(&mut stage, input, RECORDS)?;
    let bundles: Vec<FeatureBundle> = read_artifact(&mut stage, input, BUNDLES)?;
    let vocabulary: Vocabulary = read_artifact(&mut stage, input, VOCABULARY)?;
    let shape: LexiconShape = read_artifact(&mut stage, input, LEXICON_SHAPE)?;
    let split: Split = read_artifact(&mut stage, input, SPLIT)?;
    let map_bytes = stage.read(&input.join(CONSOLIDATION), CONSOLIDATION)?;
    let map = ConsolidationMap::from_json(&String::from_utf8_lossy(&map_bytes))?;
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    let prepared = prepare(&records, &bundles, &vocabulary, &shape, &split, &map, &config)?;
    let model = train(&prepared.dataset, &config)?;
    stage.carry_from(input)?;
    stage.write(MODEL, &Checkpoint::from_model(&model).to_bytes()?)?;
    stage.write_json(HISTORY, &history_rows(&model))?;
    let mut timing = BTreeMap::new();
    timing.insert(
        "overall".to_string(),
        model.history.iter().map(|h| h.elapsed_secs).collect::<Vec<_>>(),
    );

    let mut text = tables::epoch_table(&model.history);
    let mut sentiment_summary = Value::Null;
    if overrides.per_sentiment {
        let models = train_per_sentiment(&prepared.dataset, &config)?;
        let mut histories = BTreeMap::new();
        for (polarity, m) in &models {
            stage.write(&model_file(*polarity), &Checkpoint::from_model(m).to_bytes()?)?;
            histories.insert(*polarity, m.history.clone());
            timing.insert(
                polarity.to_string(),
                m.history.iter().map(|h| h.elapsed_secs).collect(),
            );
        }
        let rows: BTreeMap<Polarity, Vec<HistoryRow>> =
            models.iter().map(|(p, m)| (*p, history_rows(m))).collect();
        stage.write_json(SENTIMENT_HISTORY, &rows)?;
        text.push('\n');
        text.push_str(&tables::sentiment_epoch_table(&histories));
        sentiment_summary = serde_json::to_value(&rows).unwrap_or(Value::Null);
    }
    // wall-clock times live outside the manifest so reruns stay comparable
    crate::store::write_atomic(&out.join(TIMING), &to_json_bytes(&timing)?)?;

    let last = model.history.last().map(HistoryRow::from);
    let summary = json!({
        "stage": "train",
        "head": config.head,
        "train_examples": prepared.dataset.train.len(),
        "validation_examples": prepared.dataset.valid.len(),
        "final": last,
        "per_sentiment": sentiment_summary,
    });
    ctx.emit(&summary, &text);
    stage.finish(summary)
}

fn evaluate_stage(ctx: &Ctx, model_path: &Path, input: &Path, out: &Path) -> CliResult<()> {
    if !model_path.is_file() {
        return Err(Failure::config(format!("no model at {}", model_path.display())));
    }
    let mut stage = Stage::new("evaluate", out, ctx.from_scratch);
    let checkpoint_bytes = stage.read(model_path, "model")?;
    let model = Checkpoint::from_bytes(&checkpoint_bytes)?.into_model()?;
    let records: Vec<ContextualizedRecord> = read_artifact(&mut stage, input, RECORDS)?;
    let bundles: Vec<FeatureBundle> = read_artifact(&mut stage, input, BUNDLES)?;
    let vocabulary: Vocabulary = read_artifact(&mut stage, input, VOCABULARY)?;
    let split: Split = read_artifact(&mut stage, input, SPLIT)?;
    let map_bytes = stage.read(&input.join(CONSOLIDATION), CONSOLIDATION)?;
    let map = ConsolidationMap::from_json(&String::from_utf8_lossy(&map_bytes))?;
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    if vocabulary.fingerprint() != model.vocabulary.fingerprint() {
        return Err(Failure::config(
            "model was trained on a different vocabulary than the one in --in",
        ));
    }
    let test_records: Vec<ContextualizedRecord> = records
        .into_iter()
        .filter(|r| split.partition_of(&r.source.conversation_id) == Some(Partition::Test))
        .collect();
    if test_records.is_empty() {
        return Err(Failure::config("empty split: test"));
    }
    let test = build_examples(
        &test_records,
        &bundles,
        &model.layout,
        &model.vocabulary,
        &model.config,
        &model.label_space,
    )?;
    let report = evaluate(&model, &test)?;
    let feedback = match feedback_sentiment_check(&test_records, &map) {
        Ok(check) => Some(check),
        Err(e) => {
            log::warn!("feedback sentiment check skipped: {e}");
            None
        }
    };

    stage.carry_from(input)?;
    stage.write(MODEL, &checkpoint_bytes)?;
    stage.write_json(METRICS, &report)?;
    stage.write(METRICS_CSV, &metrics_csv(&report)?)?;
    if let Some(check) = &feedback {
        stage.write_json(FEEDBACK, check)?;
    }
    let summary = json!({
        "stage": "evaluate",
        "examples": report.examples,
        "subset_accuracy": report.subset_accuracy,
        "argmax_accuracy": report.argmax_accuracy,
        "micro_f1": report.micro.f1,
        "macro_f1": report.macro_average.f1,
        "macro_auc_roc": report.macro_auc_roc,
        "feedback_sentiment_accuracy": feedback.as_ref().map(|f| f.accuracy),
    });
    let mut text = tables::metrics_table(&report);
    if let Some(check) = &feedback {
        text.push_str(&format!(
            "feedback sentiment accuracy {:.4} over {} utterances\n",
            check.accuracy, check.examples
        ));
    }
    ctx.emit(&summary, &text);
    stage.finish(summary)
}

fn csv_bytes(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> CliResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).map_err(|e| Failure::data(e.to_string()))?;
    w.into_inner().map_err(|e| Failure::data(e.to_string()))
}

fn fmt4(x: f64) -> String {
    format!("{x:.6}")
}

fn metrics_csv(report: &MetricsReport) -> CliResult<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record([
            "slice",
            "label",
            "support",
            "tp",
            "fp",
            "fn",
            "tn",
            "accuracy",
            "precision",
            "recall",
            "f1",
            "auc_roc",
        ])?;
        let mut slices = vec![("all".to_string(), report)];
        slices.extend(report.per_sentiment.iter().map(|(p, r)| (p.to_string(), r)));
        for (slice, r) in slices {
            for l in &r.labels {
                w.write_record([
                    slice.clone(),
                    l.label.clone(),
                    l.support.to_string(),
                    l.counts.tp.to_string(),
                    l.counts.fp.to_string(),
                    l.counts.fn_.to_string(),
                    l.counts.tn.to_string(),
                    fmt4(l.metrics.accuracy),
                    fmt4(l.metrics.precision),
                    fmt4(l.metrics.recall),
                    fmt4(l.metrics.f1),
                    l.auc_roc.map(fmt4).unwrap_or_default(),
                ])?;
            }
        }
        Ok(())
    })
}

fn join<T: ToString>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|t| t.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn records_csv(records: &[ContextualizedRecord]) -> CliResult<Vec<u8>> {
    csv_bytes(|w| {
        w.write_record([
            "conversation_id",
            "utterance_id",
            "position",
            "conversation_length",
            "actor",
            "tags",
            "categories",
            "previous_categories",
            "polarity",
            "sentiment_score",
            "top_words",
            "entity_types",
            "tokens",
        ])?;
        for r in records {
            w.write_record([
                r.source.conversation_id.clone(),
                r.source.utterance_id.clone(),
                r.position.to_string(),
                r.conversation_length.to_string(),
                r.actor.as_str().to_string(),
                join(&r.labeling.raw_tags),
                join(r.labeling.categories.iter().map(|c| c.as_str())),
                join(r.previous_categories.iter().map(|c| c.as_str())),
                r.polarity.to_string(),
                r.sentiment_score.to_string(),
                join(r.top_words.iter().map(|(w, c)| format!("{w}:{c}"))),
                join(&r.entity_types),
                r.tokens.len().to_string(),
            ])?;
        }
        Ok(())
    })
}

fn distribution_csv(d: &LabelDistribution) -> CliResult<Vec<u8>> {
    csv_bytes(|w| {
        let tags: Vec<&String> = d.tag_counts.keys().collect();
        let mut header = vec!["tag".to_string(), "count".to_string()];
        header.extend(tags.iter().map(|t| t.to_string()));
        w.write_record(&header)?;
        for a in &tags {
            let mut row = vec![a.to_string(), d.tag_counts[*a].to_string()];
            row.extend(tags.iter().map(|b| d.co_occurrence(a, b).to_string()));
            w.write_record(&row)?;
        }
        Ok(())
    })
}

/// Utterance counts per polarity and category.
fn sentiment_intent_csv(records: &[ContextualizedRecord]) -> CliResult<Vec<u8>> {
    let mut counts: BTreeMap<(Polarity, Category), usize> = BTreeMap::new();
    for r in records {
        for c in &r.labeling.categories {
            *counts.entry((r.polarity, *c)).or_default() += 1;
        }
    }
    csv_bytes(|w| {
        let mut header = vec!["polarity".to_string()];
        header.extend(Category::ALL.iter().map(|c| c.as_str().to_string()));
        w.write_record(&header)?;
        for p in Polarity::ALL {
            let mut row = vec![p.to_string()];
            row.extend(
                Category::ALL
                    .iter()
                    .map(|c| counts.get(&(p, *c)).copied().unwrap_or(0).to_string()),
            );
            w.write_record(&row)?;
        }
        Ok(())
    })
}

fn read_optional<T: for<'de> Deserialize<'de>>(
    stage: &mut Stage,
    dir: &Path,
    file: &str,
) -> CliResult<Option<T>> {
    let path = dir.join(file);
    if path.is_file() {
        read_artifact(stage, dir, file).map(Some)
    } else {
        Ok(None)
    }
}

fn report(ctx: &Ctx, input: &Path, out: &Path) -> CliResult<()> {
    let mut stage = Stage::new("report", out, ctx.from_scratch);
    let records: Vec<ContextualizedRecord> = read_artifact(&mut stage, input, RECORDS)?;
    let distribution: LabelDistribution = read_artifact(&mut stage, input, DISTRIBUTION)?;
    let metrics: MetricsReport = read_artifact(&mut stage, input, METRICS)?;
    let history: Option<Vec<HistoryRow>> = read_optional(&mut stage, input, HISTORY)?;
    let feedback: Option<FeedbackCheck> = read_optional(&mut stage, input, FEEDBACK)?;
    let model = if input.join(MODEL).is_file() {
        let bytes = stage.read(&input.join(MODEL), MODEL)?;
        Some(Checkpoint::from_bytes(&bytes)?.into_model()?)
    } else {
        None
    };
    let Some(mut stage) = skip_if_fresh(ctx, stage)? else {
        return Ok(());
    };

    stage.write(RECORDS.replace(".json", ".csv").as_str(), &records_csv(&records)?)?;
    stage.write("label_distribution.csv", &distribution_csv(&distribution)?)?;
    stage.write("sentiment_intent.csv", &sentiment_intent_csv(&records)?)?;
    stage.write(METRICS_CSV, &metrics_csv(&metrics)?)?;
    let mut text = tables::metrics_table(&metrics);
    for (polarity, sub) in &metrics.per_sentiment {
        text.push_str(&format!("\n{polarity} ({} utterances)\n", sub.examples));
        text.push_str(&tables::metrics_table(sub));
    }
    stage.write("metrics_table.txt", text.as_bytes())?;
    if let Some(rows) = history {
        let stats: Vec<EpochStats> = rows.into_iter().map(HistoryRow::into_stats).collect();
        stage.write("epochs.txt", tables::epoch_table(&stats).as_bytes())?;
    }
    if let Some(check) = &feedback {
        stage.write_json(FEEDBACK, check)?;
    }
    let mut attribution_written = false;
    if let Some(model) = &model {
        if model.params.head() == Head::Linear {
            let names = model.layout.feature_names(&model.vocabulary);
            let attribution =
                reverse_feature_report(model, &names, &crate::store::now())?.truncated(ATTRIBUTION_TOP);
            stage.write(
                "attribution.csv",
                &csv_bytes(|w| {
                    w.write_record(["label", "rank", "feature", "weight"])?;
                    for l in &attribution.labels {
                        for (rank, f) in l.ranking.iter().enumerate() {
                            w.write_record([
                                l.label.clone(),
                                (rank + 1).to_string(),
                                f.feature_name.clone(),
                                format!("{:.6}", f.weight),
                            ])?;
                        }
                    }
                    Ok(())
                })?,
            )?;
            stage.write_json("attribution.json", &attribution)?;
            attribution_written = true;
        } else {
            log::warn!("attribution report needs the linear head; skipped");
        }
    }
    let summary = json!({
        "stage": "report",
        "records": records.len(),
        "subset_accuracy": metrics.subset_accuracy,
        "attribution": attribution_written,
    });
    ctx.emit(&summary, &text);
    stage.finish(summary)
}

fn gradcheck(ctx: &Ctx, trials: usize) -> CliResult<()> {
    if trials == 0 {
        return Err(Failure::config("--trials must be at least 1"));
    }
    let seed = seed_override()?.unwrap_or(42);
    let mut rng = named_rng(seed, "gradcheck");
    let summaries: Vec<GradCheckSummary> = [Head::Linear, Head::Attention]
        .into_iter()
        .map(|head| run_trials(head, trials, &mut rng))
        .collect::<Result<_, _>>()?;
    let passed = summaries
        .iter()
        .all(|s| s.max_relative_error < GRADCHECK_TOLERANCE);
    let text: String = summaries
        .iter()
        .map(|s| {
            format!(
                "{:<9} trials {:>4}  max params {:>3}  max relative error {:.3e}  {}\n",
                s.head.to_string(),
                s.trials,
                s.max_parameters,
                s.max_relative_error,
                if s.max_relative_error < GRADCHECK_TOLERANCE {
                    "ok"
                } else {
                    "FAIL"
                }
            )
        })
        .collect();
    ctx.emit(
        &json!({"tolerance": GRADCHECK_TOLERANCE, "passed": passed, "heads": summaries}),
        &text,
    );
    if passed {
        Ok(())
    } else {
        Err(Failure::data("gradient check exceeded tolerance"))
    }
}
