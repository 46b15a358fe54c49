//! Confusion counting, accuracy/precision/recall/F1, AUC-ROC and the
//! held-out evaluation report.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::contextualize::ContextualizedRecord;
use crate::error::{Error, Result};
use crate::features::Polarity;
use crate::model::{argmax, decide, forward, Example, TrainedModel};
use crate::taxonomy::{ConsolidationMap, LabelMode};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    fn add(&mut self, other: &LabelCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub examples: usize,
    pub per_label: Vec<LabelCounts>,
}

impl ConfusionCounts {
    /// Counts pooled over every label.
    pub fn pooled(&self) -> LabelCounts {
        let mut total = LabelCounts::default();
        for c in &self.per_label {
            total.add(c);
        }
        total
    }
}

/// Per-label binary counting over indicator rows. Single-label predictions
/// are one-hot rows, which makes this one-vs-rest.
pub fn confusion(predictions: &[Vec<bool>], targets: &[Vec<bool>], labels: usize) -> Result<ConfusionCounts> {
    if predictions.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut per_label = vec![LabelCounts::default(); labels];
    for (p, t) in predictions.iter().zip(targets) {
        if p.len() != labels || t.len() != labels {
            return Err(Error::Dimension(format!(
                "indicator row is not {labels} labels wide"
            )));
        }
        for (c, (&pi, &ti)) in per_label.iter_mut().zip(p.iter().zip(t)) {
            match (pi, ti) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts {
        examples: predictions.len(),
        per_label,
    })
}

/// Which metrics hit a 0/0 denominator and were set to 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroDivision {
    pub accuracy: bool,
    pub precision: bool,
    pub recall: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub zero_division: ZeroDivision,
}

fn ratio(num: f64, den: f64, flag: &mut bool) -> f64 {
    if den == 0.0 {
        *flag = true;
        0.0
    } else {
        num / den
    }
}

pub fn metrics(c: &LabelCounts) -> Metrics {
    let (tp, fp, fn_, tn) = (c.tp as f64, c.fp as f64, c.fn_ as f64, c.tn as f64);
    let mut z = ZeroDivision::default();
    Metrics {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_, &mut z.accuracy),
        precision: ratio(tp, tp + fp, &mut z.precision),
        recall: ratio(tp, tp + fn_, &mut z.recall),
        f1: ratio(tp, tp + 0.5 * (fp + fn_), &mut z.f1),
        zero_division: z,
    }
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half, via the rank-sum statistic.
pub fn auc_roc(scores: &[f64], targets: &[bool]) -> Result<f64> {
    if scores.len() != targets.len() {
        return Err(Error::Dimension(format!(
            "{} scores for {} targets",
            scores.len(),
            targets.len()
        )));
    }
    let positives = targets.iter().filter(|t| **t).count();
    let negatives = targets.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // 1-based ranks, tied groups share their mean rank
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mean_rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| targets[i]).count();
        positive_rank_sum += mean_rank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub support: usize,
    pub counts: LabelCounts,
    pub metrics: Metrics,
    /// None when the label has only positives or only negatives.
    pub auc_roc: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub examples: usize,
    pub labels: Vec<LabelReport>,
    /// Precision, recall and F1 from counts pooled over labels. Accuracy is
    /// the share of examples whose predicted label set is exactly right.
    pub micro: Metrics,
    pub macro_average: Averages,
    /// Mean over labels with a defined AUC; None if there are none.
    pub macro_auc_roc: Option<f64>,
    /// Exact label-set match (multi-label) or argmax match (single-label).
    pub subset_accuracy: f64,
    /// Share of examples whose top-scoring label is a true label.
    pub argmax_accuracy: f64,
    pub per_sentiment: BTreeMap<Polarity, MetricsReport>,
}

/// Scores for one evaluated example.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub probabilities: Vec<f64>,
    pub predicted: Vec<bool>,
    pub truth: Vec<bool>,
    pub polarity: Polarity,
}

fn indicator(labels: &[usize], width: usize) -> Vec<bool> {
    let mut row = vec![false; width];
    for &l in labels {
        row[l] = true;
    }
    row
}

/// Applies the decision rule of `mode` to each probability row.
pub fn score_examples(
    probabilities: Vec<Vec<f64>>,
    truths: Vec<Vec<bool>>,
    polarities: &[Polarity],
    mode: LabelMode,
    threshold: f64,
) -> Vec<Scored> {
    probabilities
        .into_iter()
        .zip(truths)
        .zip(polarities)
        .map(|((probabilities, truth), &polarity)| Scored {
            predicted: indicator(&decide(&probabilities, mode, threshold), truth.len()),
            probabilities,
            truth,
            polarity,
        })
        .collect()
}

fn report_without_slices(scored: &[&Scored], label_names: &[String]) -> Result<MetricsReport> {
    let width = label_names.len();
    let predictions: Vec<Vec<bool>> = scored.iter().map(|s| s.predicted.clone()).collect();
    let truths: Vec<Vec<bool>> = scored.iter().map(|s| s.truth.clone()).collect();
    let counts = confusion(&predictions, &truths, width)?;

    let mut labels = Vec::with_capacity(width);
    for (l, name) in label_names.iter().enumerate() {
        let scores: Vec<f64> = scored.iter().map(|s| s.probabilities[l]).collect();
        let targets: Vec<bool> = scored.iter().map(|s| s.truth[l]).collect();
        let auc = match auc_roc(&scores, &targets) {
            Ok(a) => Some(a),
            Err(Error::UndefinedAuc) => None,
            Err(e) => return Err(e),
        };
        let c = counts.per_label[l];
        labels.push(LabelReport {
            label: name.clone(),
            support: c.tp + c.fn_,
            counts: c,
            metrics: metrics(&c),
            auc_roc: auc,
        });
    }

    let n = scored.len();
    let exact = scored.iter().filter(|s| s.predicted == s.truth).count();
    let top = scored
        .iter()
        .filter(|s| s.truth[argmax(&s.probabilities)])
        .count();
    let mut z = ZeroDivision::default();
    let subset_accuracy = ratio(exact as f64, n as f64, &mut z.accuracy);
    let argmax_accuracy = ratio(top as f64, n as f64, &mut ZeroDivision::default().accuracy);
    let mut micro = metrics(&counts.pooled());
    micro.accuracy = subset_accuracy;
    micro.zero_division.accuracy = z.accuracy;

    let mean = |f: fn(&Metrics) -> f64| {
        if labels.is_empty() {
            0.0
        } else {
            labels.iter().map(|l| f(&l.metrics)).sum::<f64>() / labels.len() as f64
        }
    };
    let macro_average = Averages {
        accuracy: mean(|m| m.accuracy),
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    let aucs: Vec<f64> = labels.iter().filter_map(|l| l.auc_roc).collect();
    let macro_auc_roc = (!aucs.is_empty()).then(|| aucs.iter().sum::<f64>() / aucs.len() as f64);

    Ok(MetricsReport {
        examples: n,
        labels,
        micro,
        macro_average,
        macro_auc_roc,
        subset_accuracy,
        argmax_accuracy,
        per_sentiment: BTreeMap::new(),
    })
}

/// Full report over `scored`, with one sub-report per polarity present.
pub fn metrics_report(scored: &[Scored], label_names: &[String]) -> Result<MetricsReport> {
    let all: Vec<&Scored> = scored.iter().collect();
    let mut report = report_without_slices(&all, label_names)?;
    for polarity in Polarity::ALL {
        let slice: Vec<&Scored> = scored.iter().filter(|s| s.polarity == polarity).collect();
        if !slice.is_empty() {
            report
                .per_sentiment
                .insert(polarity, report_without_slices(&slice, label_names)?);
        }
    }
    Ok(report)
}

/// Evaluates `model` on held-out examples, refusing any example whose
/// conversation was used for training or validation.
pub fn evaluate(model: &TrainedModel, test: &[Example]) -> Result<MetricsReport> {
    let leaked: BTreeSet<&str> = test
        .iter()
        .map(|e| e.key.conversation_id.as_str())
        .filter(|c| model.training_conversations.contains(*c))
        .collect();
    if !leaked.is_empty() {
        return Err(Error::Leakage(leaked.len()));
    }
    let width = model.label_space.len();
    let mut probabilities = Vec::with_capacity(test.len());
    for ex in test {
        probabilities.push(forward(&model.params, &ex.input, model.label_space.mode)?.probabilities);
    }
    let truths = test.iter().map(|e| e.target.indicator(width)).collect();
    let polarities: Vec<Polarity> = test.iter().map(|e| e.polarity).collect();
    let scored = score_examples(
        probabilities,
        truths,
        &polarities,
        model.label_space.mode,
        model.config.decision_threshold,
    );
    metrics_report(&scored, &model.label_space.labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackCheck {
    /// Records with exactly one feedback polarity in their tags.
    pub examples: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// Records tagged with both positive and negative feedback codes.
    pub ambiguous: usize,
    /// truth polarity → predicted polarity → count
    pub confusion: BTreeMap<Polarity, BTreeMap<Polarity, usize>>,
}

/// Compares lexicon polarity with the feedback polarity implied by the tags.
/// A neutral prediction always counts as wrong.
pub fn feedback_sentiment_check(
    records: &[ContextualizedRecord],
    map: &ConsolidationMap,
) -> Result<FeedbackCheck> {
    let mut check = FeedbackCheck {
        examples: 0,
        correct: 0,
        accuracy: 0.0,
        ambiguous: 0,
        confusion: BTreeMap::new(),
    };
    for r in records {
        let positive = r
            .labeling
            .raw_tags
            .iter()
            .any(|t| map.feedback_positive.contains(t));
        let negative = r
            .labeling
            .raw_tags
            .iter()
            .any(|t| map.feedback_negative.contains(t));
        let truth = match (positive, negative) {
            (true, false) => Polarity::Positive,
            (false, true) => Polarity::Negative,
            (true, true) => {
                check.ambiguous += 1;
                continue;
            }
            (false, false) => continue,
        };
        check.examples += 1;
        if r.polarity == truth {
            check.correct += 1;
        }
        *check
            .confusion
            .entry(truth)
            .or_default()
            .entry(r.polarity)
            .or_default() += 1;
    }
    if check.examples == 0 {
        return Err(Error::Data("no feedback-tagged records".into()));
    }
    check.accuracy = check.correct as f64 / check.examples as f64;
    Ok(check)
}
