//! Leave-one-interaction-out folds with a class-balanced validation set.
//!
//! Validation sequences come from a few held-out training speakers, chosen
//! in seeded random order until every class can supply its quota; whatever
//! those speakers have beyond the quota is set aside. Train, validation and
//! test therefore never share a speaker.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Task, Utterance};
use crate::error::{Error, Result};

/// Position of a sequence in an utterance list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SequenceRef {
    pub utterance: usize,
    pub sequence: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldConfig {
    pub task: Task,
    pub validation_per_class: usize,
    pub seed: u64,
}

impl FoldConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        FoldConfig { task, validation_per_class: 30, seed }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FoldSplit {
    pub index: usize,
    pub test_interaction: String,
    pub train: Vec<SequenceRef>,
    pub validation: Vec<SequenceRef>,
    pub test: Vec<SequenceRef>,
    pub validation_speakers: Vec<String>,
    /// Sequences of validation speakers beyond the per-class quota.
    pub set_aside: usize,
}

/// One fold per interaction (sorted by id); fold `i` tests on interaction `i`.
/// Sequences whose label the task excludes appear in no split.
pub fn make_folds(utterances: &[Utterance], cfg: &FoldConfig) -> Result<Vec<FoldSplit>> {
    let interactions: BTreeSet<&str> = utterances.iter().map(|u| u.interaction_id.as_str()).collect();
    if interactions.len() < 2 {
        return Err(Error::validation(format!(
            "cross-validation needs at least 2 interactions, found {}",
            interactions.len()
        )));
    }
    let classes = cfg.task.class_count();
    let names = cfg.task.class_names();
    let mut folds = Vec::with_capacity(interactions.len());
    for (index, test_interaction) in interactions.iter().enumerate() {
        let mut test = Vec::new();
        // speaker -> class -> sequences
        let mut pool: BTreeMap<&str, Vec<Vec<SequenceRef>>> = BTreeMap::new();
        for (ui, u) in utterances.iter().enumerate() {
            let Some(class) = cfg.task.class_of(u.label) else { continue };
            let refs = (0..u.sequences.len()).map(|si| SequenceRef { utterance: ui, sequence: si });
            if u.interaction_id == *test_interaction {
                test.extend(refs);
            } else {
                pool.entry(&u.speaker_id).or_insert_with(|| vec![Vec::new(); classes])[class].extend(refs);
            }
        }
        for c in 0..classes {
            let available: usize = pool.values().map(|v| v[c].len()).sum();
            if available < cfg.validation_per_class {
                return Err(Error::validation(format!(
                    "fold {index}: class {} has {available} training sequences, {} are needed for validation",
                    names[c], cfg.validation_per_class
                )));
            }
        }

        let mut speakers: Vec<&str> = pool.keys().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(index as u64 + 1);
        speakers.shuffle(&mut rng);
        let mut held = vec![Vec::new(); classes];
        let mut validation_speakers = Vec::new();
        for s in &speakers {
            if held.iter().all(|h: &Vec<SequenceRef>| h.len() >= cfg.validation_per_class) {
                break;
            }
            validation_speakers.push(s.to_string());
            for (c, refs) in pool[s].iter().enumerate() {
                held[c].extend(refs.iter().copied());
            }
        }
        let mut validation = Vec::new();
        let mut set_aside = 0;
        for mut h in held {
            h.shuffle(&mut rng);
            set_aside += h.len() - cfg.validation_per_class;
            h.truncate(cfg.validation_per_class);
            validation.extend(h);
        }
        validation.sort();
        let mut train: Vec<SequenceRef> = pool
            .iter()
            .filter(|(s, _)| !validation_speakers.iter().any(|v| v == *s))
            .flat_map(|(_, per_class)| per_class.iter().flatten().copied())
            .collect();
        train.sort();
        if train.is_empty() {
            return Err(Error::validation(format!(
                "fold {index}: no training sequences remain after holding out validation speakers"
            )));
        }
        validation_speakers.sort();
        folds.push(FoldSplit {
            index,
            test_interaction: test_interaction.to_string(),
            train,
            validation,
            test,
            validation_speakers,
            set_aside,
        });
    }
    Ok(folds)
}
