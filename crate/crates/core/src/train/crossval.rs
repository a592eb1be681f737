use std::fs;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{fit_with, EpochRecord, TrainConfig, TrainHistory};
use crate::config::KeyValues;
use crate::corpus::{Sequence, Task};
use crate::error::{Error, Result};
use crate::eval::{crossval_summary, evaluate, write_reports, Aggregation, Evaluation, Summary, UtterancePredictions};
use crate::model::{save_checkpoint, Model, ModelProfile};
use crate::preprocess::{make_folds, Dataset, FoldConfig, FoldSplit, SequenceRef};

#[derive(Clone, Debug)]
pub struct FoldResult {
    pub split: FoldSplit,
    pub history: TrainHistory,
    pub evaluation: Evaluation,
    pub init_seed: u64,
}

impl FoldResult {
    /// Test metrics plus fold bookkeeping, as written to `metrics.txt`.
    pub fn metrics(&self) -> KeyValues {
        let mut kv = self.evaluation.to_key_values();
        kv.set("fold", self.split.index);
        kv.set("test_interaction", &self.split.test_interaction);
        kv.set("train_sequences", self.split.train.len());
        kv.set("validation_sequences", self.split.validation.len());
        kv.set("test_sequences", self.split.test.len());
        kv.set("best_epoch", self.history.best_epoch);
        kv.set("epochs_run", self.history.epochs.len());
        kv
    }
}

#[derive(Clone, Debug)]
pub struct CrossvalOutcome {
    pub folds: Vec<FoldResult>,
    /// Mean and sample standard deviation of every numeric fold metric.
    pub summary: Vec<(String, Summary)>,
}

impl CrossvalOutcome {
    pub fn mean(&self, key: &str) -> Option<f64> {
        self.summary.iter().find(|(k, _)| k == key).map(|(_, s)| s.mean)
    }

    pub fn summary_text(&self) -> String {
        let mut kv = KeyValues::new();
        kv.set("folds", self.folds.len());
        for (k, s) in &self.summary {
            kv.set(&format!("{k}.mean"), format!("{:.6}", s.mean));
            kv.set(&format!("{k}.std"), format!("{:.6}", s.std));
        }
        kv.to_string()
    }
}

fn sequences<'a>(dataset: &'a Dataset, refs: &[SequenceRef]) -> Vec<&'a Sequence> {
    refs.iter().map(|r| &dataset.utterances[r.utterance].sequences[r.sequence]).collect()
}

/// Fold-specific seeds for weight initialisation and batch shuffling.
fn fold_seeds(master: u64, fold: usize) -> (u64, u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(fold as u64 + 1);
    (rng.random(), rng.random())
}

fn run_fold(
    dataset: &Dataset,
    split: &FoldSplit,
    profile: &ModelProfile,
    cfg: &TrainConfig,
    out: Option<&Path>,
    on_epoch: &(dyn Fn(usize, &EpochRecord) + Sync),
) -> Result<FoldResult> {
    let (init_seed, shuffle_seed) = fold_seeds(cfg.seed, split.index);
    let model = Model::new(cfg.experiment, profile, init_seed)?;
    let fold_cfg = TrainConfig { seed: shuffle_seed, ..cfg.clone() };
    let train = sequences(dataset, &split.train);
    let validation = sequences(dataset, &split.validation);
    let (model, history) = fit_with(model, &train, &validation, &fold_cfg, &mut |r| on_epoch(split.index, r))?;

    let evaluation = evaluate_model(&model, dataset, &split.test, cfg.aggregation, cfg.batch_size)?;
    let result = FoldResult { split: split.clone(), history, evaluation, init_seed };

    if let Some(out) = out {
        let dir = out.join(format!("fold_{}", split.index));
        write_reports(&dir, &result.evaluation)?;
        let write = |name: &str, text: String| {
            let p = dir.join(name);
            fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
        };
        write("metrics.txt", result.metrics().to_string())?;
        write("history.txt", result.history.to_text())?;
        save_checkpoint(&model, &dir.join("checkpoint.bin"))?;
    }
    Ok(result)
}

/// Predicts every referenced sequence and scores it at sequence, utterance
/// and first-sequence level. `refs` must list each utterance's sequences contiguously.
pub fn evaluate_model(
    model: &Model,
    dataset: &Dataset,
    refs: &[SequenceRef],
    aggregation: Aggregation,
    batch_size: usize,
) -> Result<Evaluation> {
    let task = model.experiment.task();
    let log_probs = model.predict(&sequences(dataset, refs), batch_size)?;
    let mut predictions: Vec<UtterancePredictions> = Vec::new();
    for (r, lp) in refs.iter().zip(log_probs) {
        let u = &dataset.utterances[r.utterance];
        if predictions.last().is_none_or(|p| p.utterance_id != u.id) {
            let label = task
                .class_of(u.label)
                .ok_or_else(|| Error::validation(format!("utterance {} has no class in this task", u.id)))?;
            predictions.push(UtterancePredictions { utterance_id: u.id.clone(), label, log_probs: Vec::new() });
        }
        predictions.last_mut().unwrap().log_probs.push(lp);
    }
    evaluate(&predictions, task, aggregation)
}

/// Every sequence the task can label, optionally restricted to one interaction.
pub fn task_sequences(dataset: &Dataset, task: Task, interaction: Option<&str>) -> Vec<SequenceRef> {
    let mut refs = Vec::new();
    for (ui, u) in dataset.utterances.iter().enumerate() {
        if task.class_of(u.label).is_none() || interaction.is_some_and(|i| i != u.interaction_id) {
            continue;
        }
        refs.extend((0..u.sequences.len()).map(|si| SequenceRef { utterance: ui, sequence: si }));
    }
    refs
}

/// One fold per interaction: train a fresh model on the others, keep the
/// best-validation epoch and evaluate on the held-out interaction. Folds run
/// on up to `jobs` threads; results do not depend on `jobs`.
///
/// With `out`, writes `effective_config.txt`, `summary.txt` and per fold
/// `fold_<i>/{checkpoint.bin, history.txt, metrics.txt, confusion.txt, curves.txt}`.
pub fn crossval(
    dataset: &Dataset,
    profile: &ModelProfile,
    cfg: &TrainConfig,
    jobs: usize,
    out: Option<&Path>,
    on_epoch: &(dyn Fn(usize, &EpochRecord) + Sync),
) -> Result<CrossvalOutcome> {
    crossval_folds(dataset, profile, cfg, None, jobs, out, on_epoch)
}

/// [`crossval`] restricted to the listed fold indices (all folds for `None`).
/// A fold's result does not depend on which other folds run.
pub fn crossval_folds(
    dataset: &Dataset,
    profile: &ModelProfile,
    cfg: &TrainConfig,
    only: Option<&[usize]>,
    jobs: usize,
    out: Option<&Path>,
    on_epoch: &(dyn Fn(usize, &EpochRecord) + Sync),
) -> Result<CrossvalOutcome> {
    cfg.validate()?;
    if profile.face_resolution != dataset.face_resolution {
        return Err(Error::config(format!(
            "profile {} expects {}px faces but the dataset holds {}px faces",
            profile.name, profile.face_resolution, dataset.face_resolution
        )));
    }
    let fold_cfg = FoldConfig {
        task: cfg.experiment.task(),
        validation_per_class: cfg.validation_per_class,
        seed: cfg.seed,
    };
    let mut splits = make_folds(&dataset.utterances, &fold_cfg)?;
    if let Some(only) = only {
        if let Some(bad) = only.iter().find(|&&i| i >= splits.len()) {
            return Err(Error::config(format!("fold {bad} does not exist, there are {}", splits.len())));
        }
        splits.retain(|s| only.contains(&s.index));
    }
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
        let mut effective = cfg.to_key_values();
        effective.merge(&profile.to_key_values());
        effective.set("jobs", jobs);
        let p = out.join("effective_config.txt");
        fs::write(&p, effective.to_string()).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<FoldResult>>>> = Mutex::new((0..splits.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, splits.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(split) = splits.get(i) else { break };
                let r = run_fold(dataset, split, profile, cfg, out, on_epoch);
                let failed = r.is_err();
                results.lock().unwrap()[i] = Some(r);
                if failed {
                    // let the other workers finish their current fold only
                    next.store(splits.len(), Ordering::SeqCst);
                }
            });
        }
    });
    let mut folds = Vec::with_capacity(splits.len());
    for (i, r) in results.into_inner().unwrap().into_iter().enumerate() {
        match r {
            Some(r) => folds.push(r.map_err(|e| Error::validation(format!("fold {}: {e}", splits[i].index)))?),
            None => return Err(Error::validation(format!("fold {} did not run", splits[i].index))),
        }
    }
    let metrics: Vec<KeyValues> = folds.iter().map(FoldResult::metrics).collect();
    let summary = crossval_summary(&metrics)
        .into_iter()
        .filter(|(k, _)| k != "fold")
        .collect();
    let outcome = CrossvalOutcome { folds, summary };
    if let Some(out) = out {
        let p = out.join("summary.txt");
        fs::write(&p, outcome.summary_text()).map_err(|e| Error::io(format!("writing {}", p.display()), e))?;
    }
    Ok(outcome)
}
