//! Training protocol: face stream on SGD, everything else on Adam, a step
//! learning-rate decay, early stopping on validation loss with best-epoch
//! restoration, and the leave-one-interaction-out cross-validation driver.

mod crossval;

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use crossval::{crossval, crossval_folds, evaluate_model, task_sequences, CrossvalOutcome, FoldResult};

use crate::config::KeyValues;
use crate::corpus::Sequence;
use crate::error::{Error, Result};
use crate::eval::{argmax, metric_report, Aggregation, ConfusionMatrix};
use crate::model::{Batch, Experiment, Model};
use crate::numerics::{adam_step, sgd_step, AdamConfig, AdamState, Graph, OptimizerKind, ParamGroup};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub experiment: Experiment,
    pub epochs: usize,
    pub lr: f64,
    /// Multiplies the learning rate once `decay_after` epochs are done.
    pub lr_decay: f64,
    pub decay_after: usize,
    pub batch_size: usize,
    /// Consecutive epochs without a new validation-loss minimum before stopping.
    pub patience: usize,
    pub validation_per_class: usize,
    pub aggregation: Aggregation,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            experiment: Experiment::IntermediateFusion,
            epochs: 50,
            lr: 1e-3,
            lr_decay: 0.1,
            decay_after: 40,
            batch_size: 10,
            patience: 10,
            validation_per_class: 30,
            aggregation: Aggregation::ConfidenceWeighted,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub const KEYS: [&'static str; 10] = [
        "experiment",
        "epochs",
        "lr",
        "lr_decay",
        "decay_after",
        "batch_size",
        "patience",
        "validation_per_class",
        "aggregation",
        "seed",
    ];

    /// Learning rate of 1-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch <= self.decay_after {
            self.lr
        } else {
            self.lr * self.lr_decay
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::config("epochs, batch_size and patience must be at least 1"));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::config("lr and lr_decay must be positive"));
        }
        Ok(())
    }

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("experiment", &mut self.experiment)?;
        kv.apply("epochs", &mut self.epochs)?;
        kv.apply("lr", &mut self.lr)?;
        kv.apply("lr_decay", &mut self.lr_decay)?;
        kv.apply("decay_after", &mut self.decay_after)?;
        kv.apply("batch_size", &mut self.batch_size)?;
        kv.apply("patience", &mut self.patience)?;
        kv.apply("validation_per_class", &mut self.validation_per_class)?;
        kv.apply("aggregation", &mut self.aggregation)?;
        kv.apply("seed", &mut self.seed)?;
        self.validate()
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("experiment", self.experiment);
        kv.set("epochs", self.epochs);
        kv.set("lr", self.lr);
        kv.set("lr_decay", self.lr_decay);
        kv.set("decay_after", self.decay_after);
        kv.set("batch_size", self.batch_size);
        kv.set("patience", self.patience);
        kv.set("validation_per_class", self.validation_per_class);
        kv.set("aggregation", self.aggregation);
        kv.set("seed", self.seed);
        kv
    }
}

/// The SGD group (face stream) and the Adam group (everything else), in that order.
pub fn assign_optimizers(model: &Model) -> [ParamGroup; 2] {
    let (sgd, adam): (Vec<usize>, Vec<usize>) =
        (0..model.params.len()).partition(|&i| model.params.get(i).name.starts_with("face."));
    [ParamGroup { kind: OptimizerKind::Sgd, members: sgd }, ParamGroup { kind: OptimizerKind::Adam, members: adam }]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    NoImprovement,
    Stop,
}

/// Patience counter over validation losses: it resets on a strictly lower
/// loss and stops once `patience` epochs in a row have not beaten the minimum.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    waiting: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping { patience, best: f64::INFINITY, best_epoch: 0, waiting: 0 }
    }

    pub fn update(&mut self, epoch: usize, loss: f64) -> Verdict {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = epoch;
            self.waiting = 0;
            Verdict::Improved
        } else {
            self.waiting += 1;
            if self.waiting >= self.patience {
                Verdict::Stop
            } else {
                Verdict::NoImprovement
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_weighted_f1: f64,
}

impl std::fmt::Display for EpochRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "epoch={} lr={} train_loss={:.10} val_loss={:.10} val_weighted_f1={:.6}",
            self.epoch, self.lr, self.train_loss, self.val_loss, self.val_weighted_f1
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainHistory {
    /// One line per epoch, fixed field order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for r in &self.epochs {
            writeln!(s, "{r}").unwrap();
        }
        s
    }
}

/// Mean negative log-likelihood of the true classes.
pub fn mean_nll(log_probs: &[Vec<f64>], labels: &[usize]) -> f64 {
    let total: f64 = log_probs.iter().zip(labels).map(|(l, &y)| -l[y]).sum();
    total / labels.len() as f64
}

fn labels_of(model: &Model, sequences: &[&Sequence]) -> Result<Vec<usize>> {
    let task = model.experiment.task();
    sequences
        .iter()
        .map(|s| task.class_of(s.label).ok_or_else(|| Error::validation(format!("sequence {} is outside the task", s.id))))
        .collect()
}

/// Validation loss and sequence-level weighted F1.
fn validation_scores(model: &Model, sequences: &[&Sequence], labels: &[usize], batch: usize) -> Result<(f64, f64)> {
    let lp = model.predict(sequences, batch)?;
    let cm = ConfusionMatrix::from_pairs(model.class_count(), labels.iter().zip(&lp).map(|(&y, l)| (y, argmax(l))))?;
    Ok((mean_nll(&lp, labels), metric_report(&cm, model.experiment.task())?.weighted_f1))
}

pub fn fit(model: Model, train: &[&Sequence], validation: &[&Sequence], cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    fit_with(model, train, validation, cfg, &mut |_| {})
}

/// [`fit`] reporting every finished epoch to `on_epoch`.
pub fn fit_with(
    mut model: Model,
    train: &[&Sequence],
    validation: &[&Sequence],
    cfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord),
) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::validation("empty training set"));
    }
    if validation.is_empty() {
        return Err(Error::validation("empty validation set"));
    }
    let task = model.experiment.task();
    let resolution = model.profile.face_resolution;
    let train_labels = labels_of(&model, train)?;
    let val_labels = labels_of(&model, validation)?;
    let [sgd, adam] = assign_optimizers(&model);
    let mut adam_state = AdamState::new(&model.params, &adam);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.params.values();
    let mut history = TrainHistory { epochs: Vec::new(), best_epoch: 0, stopped_early: false };

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let seqs: Vec<&Sequence> = chunk.iter().map(|&i| train[i]).collect();
            let batch = Batch::new(&seqs, task, resolution)?;
            debug_assert_eq!(batch.labels, chunk.iter().map(|&i| train_labels[i]).collect::<Vec<_>>());
            let mut g = Graph::new();
            let vars = model.params.bind(&mut g, true);
            let faces = g.constant(batch.faces);
            let poses = g.constant(batch.poses);
            let out = model.forward(&mut g, &vars, faces, poses)?;
            let loss = g.nll_loss(out, &batch.labels)?;
            let value = g.value(loss).item()?;
            if !value.is_finite() {
                return Err(Error::Numeric(format!("training loss is {value} at epoch {epoch}, batch {b}")));
            }
            g.backward(loss)?;
            model.params.zero_grad();
            model.params.accumulate_grads(&g, &vars);
            drop(g);
            sgd_step(&mut model.params, &sgd, lr);
            adam_step(&mut model.params, &adam, &mut adam_state, lr, AdamConfig::default());
            loss_sum += value * seqs.len() as f64;
        }
        let (val_loss, val_f1) = validation_scores(&model, validation, &val_labels, cfg.batch_size)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss is {val_loss} at epoch {epoch}")));
        }
        let record = EpochRecord { epoch, lr, train_loss: loss_sum / train.len() as f64, val_loss, val_weighted_f1: val_f1 };
        on_epoch(&record);
        history.epochs.push(record);
        match stopper.update(epoch, val_loss) {
            Verdict::Improved => best = model.params.values(),
            Verdict::NoImprovement => {}
            Verdict::Stop => {
                history.stopped_early = true;
                break;
            }
        }
    }
    history.best_epoch = stopper.best_epoch();
    model.params.set_values(best)?;
    Ok((model, history))
}
