//! Classification metrics: confusion matrices, per-class precision, recall
//! and F1, support-weighted F1, binary specificity, utterance-level
//! aggregation of sequence predictions and cross-validation summaries.
//!
//! All metric values are percentages. A ratio with a zero denominator is
//! reported as 0 and named in [`MetricReport::degenerate`].

mod report;
mod utterance;

use std::fmt;

pub use report::{read_metrics, write_reports};
pub use utterance::{
    aggregate_utterance, evaluate, Aggregation, BucketReport, Evaluation, UtterancePredictions, BUCKET_NAMES,
};

use crate::config::KeyValues;
use crate::corpus::Task;
use crate::error::{Error, Result};

/// Counts with rows indexed by true class and columns by predicted class.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix { classes, counts: vec![0; classes * classes] }
    }

    /// Matrix from rows of counts, `rows[true][predicted]`.
    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if n < 2 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::shape(format!("confusion matrix must be square with at least 2 classes, got {n} rows")));
        }
        Ok(ConfusionMatrix { classes: n, counts: rows.concat() })
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(classes);
        for (t, p) in pairs {
            cm.add(t, p)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.classes || predicted >= self.classes {
            return Err(Error::validation(format!(
                "class pair ({truth}, {predicted}) outside a {}-class matrix",
                self.classes
            )));
        }
        self.counts[truth * self.classes + predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.classes).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, predicted: usize) -> u64 {
        (0..self.classes).map(|t| self.get(t, predicted)).sum()
    }
}

/// Whitespace-separated grid, one line per true class.
impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for t in 0..self.classes {
            let row: Vec<String> = (0..self.classes).map(|p| self.get(t, p).to_string()).collect();
            writeln!(f, "{}", row.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub classes: Vec<ClassMetrics>,
    pub weighted_f1: f64,
    pub accuracy: f64,
    /// Binary task only: true-negative rate, positive class ADDRESSED.
    pub specificity: Option<f64>,
    pub items: u64,
    pub confusion: ConfusionMatrix,
    /// Names of values whose denominator was zero.
    pub degenerate: Vec<String>,
}

/// `100 * num / den`, or 0 with a flag when `den` is zero.
fn ratio(num: f64, den: f64, name: String, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        flags.push(name);
        0.0
    } else {
        100.0 * num / den
    }
}

pub fn class_metrics(cm: &ConfusionMatrix, names: &[&str]) -> (Vec<ClassMetrics>, Vec<String>) {
    let mut flags = Vec::new();
    let per = (0..cm.classes())
        .map(|c| {
            let tp = cm.get(c, c) as f64;
            let name = names.get(c).map_or_else(|| c.to_string(), |s| s.to_string());
            let precision = ratio(tp, cm.col_sum(c) as f64, format!("{name}.precision"), &mut flags);
            let recall = ratio(tp, cm.row_sum(c) as f64, format!("{name}.recall"), &mut flags);
            let f1 = if precision + recall == 0.0 {
                flags.push(format!("{name}.f1"));
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassMetrics { name, precision, recall, f1, support: cm.row_sum(c) }
        })
        .collect();
    (per, flags)
}

/// Per-class metrics and support-weighted F1 for `task`; binary tasks also
/// get specificity with ADDRESSED as the positive class.
pub fn metric_report(cm: &ConfusionMatrix, task: Task) -> Result<MetricReport> {
    if cm.classes() != task.class_count() {
        return Err(Error::shape(format!(
            "{}-class matrix for a {}-class task",
            cm.classes(),
            task.class_count()
        )));
    }
    let (classes, mut degenerate) = class_metrics(cm, task.class_names());
    let total = cm.total() as f64;
    let weighted_f1 = if total == 0.0 {
        degenerate.push("weighted_f1".into());
        0.0
    } else {
        classes.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / total
    };
    let correct: u64 = (0..cm.classes()).map(|c| cm.get(c, c)).sum();
    let accuracy = ratio(correct as f64, total, "accuracy".into(), &mut degenerate);
    let specificity = (task == Task::Binary).then(|| {
        let (tn, fp) = (cm.get(0, 0) as f64, cm.get(0, 1) as f64);
        ratio(tn, tn + fp, "specificity".into(), &mut degenerate)
    });
    Ok(MetricReport { classes, weighted_f1, accuracy, specificity, items: cm.total(), confusion: cm.clone(), degenerate })
}

/// Binary report: the ADDRESSED row carries precision, recall (sensitivity)
/// and F1; `weighted_f1` is the overall F1 of both classes.
pub fn binary_metrics(cm: &ConfusionMatrix) -> Result<MetricReport> {
    metric_report(cm, Task::Binary)
}

impl MetricReport {
    /// The positive (ADDRESSED) class of a binary report.
    pub fn positive(&self) -> Option<&ClassMetrics> {
        self.specificity.is_some().then(|| &self.classes[1])
    }

    pub fn overall_f1(&self) -> f64 {
        self.weighted_f1
    }

    /// Entries `{prefix}.weighted_f1`, `{prefix}.{CLASS}.f1` and so on.
    pub fn to_key_values(&self, prefix: &str) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set(&format!("{prefix}.items"), self.items);
        kv.set(&format!("{prefix}.weighted_f1"), format!("{:.6}", self.weighted_f1));
        kv.set(&format!("{prefix}.accuracy"), format!("{:.6}", self.accuracy));
        for c in &self.classes {
            kv.set(&format!("{prefix}.{}.precision", c.name), format!("{:.6}", c.precision));
            kv.set(&format!("{prefix}.{}.recall", c.name), format!("{:.6}", c.recall));
            kv.set(&format!("{prefix}.{}.f1", c.name), format!("{:.6}", c.f1));
            kv.set(&format!("{prefix}.{}.support", c.name), c.support);
        }
        if let Some(s) = self.specificity {
            kv.set(&format!("{prefix}.specificity"), format!("{s:.6}"));
        }
        if !self.degenerate.is_empty() {
            kv.set(&format!("{prefix}.degenerate"), self.degenerate.join(","));
        }
        kv
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Mean and sample standard deviation (0 for fewer than two values).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: f64::NAN, std: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Summary { mean, std, n }
}

/// Mean and standard deviation of every numeric metric shared by all folds.
pub fn crossval_summary(folds: &[KeyValues]) -> Vec<(String, Summary)> {
    let Some(first) = folds.first() else { return Vec::new() };
    first
        .keys()
        .filter_map(|k| {
            let values: Option<Vec<f64>> = folds.iter().map(|f| f.get(k)?.parse::<f64>().ok()).collect();
            values.map(|v| (k.to_string(), summarize(&v)))
        })
        .collect()
}
