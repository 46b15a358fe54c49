//! Fixed-width console tables.

use std::collections::BTreeMap;
use std::fmt::Write;

use intent_core::corpus::CorpusStats;
use intent_core::eval::MetricsReport;
use intent_core::features::Polarity;
use intent_core::model::EpochStats;

pub fn clock(secs: f64) -> String {
    let total = secs.max(0.0).round() as u64;
    format!("{}:{:02}:{:02}", total / 3600, total / 60 % 60, total % 60)
}

pub fn epoch_table(history: &[EpochStats]) -> String {
    let mut out = format!(
        "{:>5}  {:>10}  {:>10}  {:>11}  {:>9}\n",
        "Epoch", "Train loss", "Valid loss", "Valid accur", "Elapsed"
    );
    for h in history {
        let _ = writeln!(
            out,
            "{:>5}  {:>10.4}  {:>10.4}  {:>11.4}  {:>9}",
            h.epoch,
            h.train_loss,
            h.valid_loss,
            h.valid_accuracy,
            clock(h.elapsed_secs)
        );
    }
    out
}

/// Per-polarity histories next to each other, one row per epoch.
pub fn sentiment_epoch_table(histories: &BTreeMap<Polarity, Vec<EpochStats>>) -> String {
    let mut out = format!("{:>5}", "Epoch");
    for p in histories.keys() {
        let _ = write!(out, "  {:>26}", format!("{p}: train / valid / accur"));
    }
    out.push('\n');
    let epochs = histories.values().map(Vec::len).max().unwrap_or(0);
    for e in 0..epochs {
        let _ = write!(out, "{:>5}", e + 1);
        for h in histories.values() {
            match h.get(e) {
                Some(s) => {
                    let _ = write!(
                        out,
                        "  {:>26}",
                        format!(
                            "{:.4} / {:.4} / {:.4}",
                            s.train_loss, s.valid_loss, s.valid_accuracy
                        )
                    );
                }
                None => {
                    let _ = write!(out, "  {:>26}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

fn optional(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

pub fn metrics_table(report: &MetricsReport) -> String {
    let width = report
        .labels
        .iter()
        .map(|l| l.label.len())
        .max()
        .unwrap_or(0)
        .max(18);
    let mut out = format!(
        "{:<width$}  {:>8}  {:>9}  {:>8}  {:>8}  {:>8}  {:>7}\n",
        "Label", "Accuracy", "Precision", "Recall", "F1", "AUC-ROC", "Support"
    );
    for l in &report.labels {
        let _ = writeln!(
            out,
            "{:<width$}  {:>8.4}  {:>9.4}  {:>8.4}  {:>8.4}  {:>8}  {:>7}",
            l.label,
            l.metrics.accuracy,
            l.metrics.precision,
            l.metrics.recall,
            l.metrics.f1,
            optional(l.auc_roc),
            l.support
        );
    }
    let m = &report.micro;
    let _ = writeln!(
        out,
        "{:<width$}  {:>8.4}  {:>9.4}  {:>8.4}  {:>8.4}  {:>8}  {:>7}",
        "micro", m.accuracy, m.precision, m.recall, m.f1, "", report.examples
    );
    let a = &report.macro_average;
    let _ = writeln!(
        out,
        "{:<width$}  {:>8.4}  {:>9.4}  {:>8.4}  {:>8.4}  {:>8}  {:>7}",
        "macro",
        a.accuracy,
        a.precision,
        a.recall,
        a.f1,
        optional(report.macro_auc_roc),
        report.examples
    );
    let _ = writeln!(
        out,
        "subset accuracy {:.4}, argmax accuracy {:.4}",
        report.subset_accuracy, report.argmax_accuracy
    );
    out
}

pub fn stats_text(stats: &CorpusStats) -> String {
    let mut out = format!(
        "conversations: {}\nutterances: {}\nvalid conversations: {} (invalid {})\n",
        stats.conversation_count,
        stats.utterance_count,
        stats.validation.valid_count,
        stats.validation.invalid_count
    );
    out.push_str("turns:");
    for (turns, count) in &stats.turn_histogram {
        let _ = write!(out, " {turns}:{count}");
    }
    out.push_str("\ntags:");
    for (tag, count) in &stats.tag_vocabulary {
        let _ = write!(out, " {tag}:{count}");
    }
    out.push_str("\nrule failures:");
    for (rule, counts) in &stats.per_rule {
        let _ = write!(out, " {rule}:{}", counts.invalid_count);
    }
    out.push('\n');
    out
}
