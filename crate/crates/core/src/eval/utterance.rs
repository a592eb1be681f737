use std::fmt;
use std::str::FromStr;

use super::{argmax, metric_report, ConfusionMatrix, MetricReport};
use crate::config::KeyValues;
use crate::corpus::Task;
use crate::error::{Error, Result};

/// How sequence predictions combine into one utterance prediction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Aggregation {
    /// Mean of probability vectors, each weighted by its largest probability.
    #[default]
    ConfidenceWeighted,
    /// Unweighted mean of probability vectors.
    Mean,
    /// Sum of log-probabilities, renormalised.
    LogProbSum,
}

impl fmt::Display for Aggregation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Aggregation::ConfidenceWeighted => "confidence",
            Aggregation::Mean => "mean",
            Aggregation::LogProbSum => "logsum",
        })
    }
}

impl FromStr for Aggregation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "confidence" => Ok(Aggregation::ConfidenceWeighted),
            "mean" => Ok(Aggregation::Mean),
            "logsum" => Ok(Aggregation::LogProbSum),
            other => Err(Error::config(format!("unknown aggregation {other:?} (expected confidence, mean or logsum)"))),
        }
    }
}

/// Class scores of an utterance from the log-probabilities of its sequences,
/// and the predicted class (ties to the lowest index).
pub fn aggregate_utterance(log_probs: &[Vec<f64>], strategy: Aggregation) -> Result<(Vec<f64>, usize)> {
    let Some(first) = log_probs.first() else {
        return Err(Error::validation("cannot aggregate an utterance without sequences"));
    };
    let c = first.len();
    if log_probs.iter().any(|l| l.len() != c) {
        return Err(Error::shape("sequence predictions disagree on the class count"));
    }
    let mut scores = vec![0.0; c];
    match strategy {
        Aggregation::ConfidenceWeighted | Aggregation::Mean => {
            let mut total = 0.0;
            for l in log_probs {
                let p: Vec<f64> = l.iter().map(|v| v.exp()).collect();
                let w = match strategy {
                    Aggregation::Mean => 1.0,
                    _ => p.iter().copied().fold(0.0, f64::max),
                };
                total += w;
                scores.iter_mut().zip(&p).for_each(|(s, p)| *s += w * p);
            }
            scores.iter_mut().for_each(|s| *s /= total);
        }
        Aggregation::LogProbSum => {
            for l in log_probs {
                scores.iter_mut().zip(l).for_each(|(s, v)| *s += v);
            }
            let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            scores.iter_mut().for_each(|s| *s = (*s - m).exp());
            let z: f64 = scores.iter().sum();
            scores.iter_mut().for_each(|s| *s /= z);
        }
    }
    let predicted = argmax(&scores);
    Ok((scores, predicted))
}

/// Model output for the sequences of one utterance, in order.
#[derive(Clone, Debug, PartialEq)]
pub struct UtterancePredictions {
    pub utterance_id: String,
    pub label: usize,
    pub log_probs: Vec<Vec<f64>>,
}

pub const BUCKET_NAMES: [&str; 4] = ["0.8s", "1.6s", "2.4s", ">2.4s"];

/// Utterance performance after a given amount of speech.
#[derive(Clone, Debug, PartialEq)]
pub struct BucketReport {
    pub name: &'static str,
    /// `None` when no utterance is long enough.
    pub report: Option<MetricReport>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub sequence: MetricReport,
    pub utterance: MetricReport,
    /// Only the first sequence of every utterance.
    pub first_sequence: MetricReport,
    pub buckets: Vec<BucketReport>,
}

fn utterance_report<'a>(
    items: impl Iterator<Item = (usize, &'a [Vec<f64>])>,
    task: Task,
    strategy: Aggregation,
) -> Result<MetricReport> {
    let mut cm = ConfusionMatrix::new(task.class_count());
    for (label, seqs) in items {
        cm.add(label, aggregate_utterance(seqs, strategy)?.1)?;
    }
    metric_report(&cm, task)
}

/// Sequence, utterance, first-sequence and duration-bucket reports.
///
/// Bucket `n` (0.8, 1.6, 2.4 s) aggregates the first `n` sequences of every
/// utterance with at least `n`; the last bucket aggregates all sequences of
/// utterances with more than three.
pub fn evaluate(predictions: &[UtterancePredictions], task: Task, strategy: Aggregation) -> Result<Evaluation> {
    if let Some(u) = predictions.iter().find(|u| u.log_probs.is_empty()) {
        return Err(Error::validation(format!("utterance {} has no sequence predictions", u.utterance_id)));
    }
    let mut seq_cm = ConfusionMatrix::new(task.class_count());
    for u in predictions {
        for l in &u.log_probs {
            seq_cm.add(u.label, argmax(l))?;
        }
    }
    let all = || predictions.iter().map(|u| (u.label, u.log_probs.as_slice()));
    let mut buckets = Vec::with_capacity(4);
    for (n, name) in BUCKET_NAMES.iter().enumerate() {
        let items: Vec<(usize, &[Vec<f64>])> = if n < 3 {
            all().filter(|(_, s)| s.len() > n).map(|(l, s)| (l, &s[..=n])).collect()
        } else {
            all().filter(|(_, s)| s.len() > 3).collect()
        };
        let report = if items.is_empty() { None } else { Some(utterance_report(items.into_iter(), task, strategy)?) };
        buckets.push(BucketReport { name, report });
    }
    Ok(Evaluation {
        sequence: metric_report(&seq_cm, task)?,
        utterance: utterance_report(all(), task, strategy)?,
        first_sequence: utterance_report(all().map(|(l, s)| (l, &s[..1])), task, strategy)?,
        buckets,
    })
}

impl Evaluation {
    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.merge(&self.sequence.to_key_values("sequence"));
        kv.merge(&self.utterance.to_key_values("utterance"));
        kv.merge(&self.first_sequence.to_key_values("first_sequence"));
        for b in &self.buckets {
            if let Some(r) = &b.report {
                kv.set(&format!("bucket_{}.utterances", b.name), r.items);
                kv.set(&format!("bucket_{}.weighted_f1", b.name), format!("{:.6}", r.weighted_f1));
            }
        }
        kv
    }

    /// One line per duration bucket, absent buckets included.
    pub fn curves(&self) -> String {
        self.buckets
            .iter()
            .map(|b| match &b.report {
                Some(r) => format!("{} utterances={} weighted_f1={:.6}\n", b.name, r.items, r.weighted_f1),
                None => format!("{} absent\n", b.name),
            })
            .collect()
    }
}
