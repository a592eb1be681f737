use proptest::prelude::*;

use addressee_core::corpus::{Task, Utterance};
use addressee_core::eval::{metric_report, ConfusionMatrix};
use addressee_core::preprocess::{flip_sequence, make_folds, preprocess_corpus, shift_range, FoldConfig, PreprocessConfig};
use addressee_core::synth::{generate_corpus, LabelSampling, ScenarioConfig};

fn corpus_utterances(seed: u64, flip: bool, shift: bool) -> Vec<Utterance> {
    let scenario = ScenarioConfig {
        interactions: 3,
        utterances_per_interaction: 12,
        label_sampling: LabelSampling::Stratified,
        seed,
        ..Default::default()
    };
    let corpus = generate_corpus(&scenario).unwrap().0;
    let cfg = PreprocessConfig { face_resolution: 26, flip, shift, seed, ..Default::default() };
    preprocess_corpus(&corpus, &cfg).unwrap().0
}

fn pairs(classes: usize) -> impl Strategy<Value = Vec<(usize, usize)>> {
    prop::collection::vec((0..classes, 0..classes), 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn weighted_f1_is_support_weighted_mean(p in pairs(3)) {
        let cm = ConfusionMatrix::from_pairs(3, p.iter().copied()).unwrap();
        let r = metric_report(&cm, Task::ThreeClass).unwrap();
        let support: u64 = r.classes.iter().map(|c| c.support).sum();
        prop_assert_eq!(support, p.len() as u64);
        let mean = r.classes.iter().map(|c| c.f1 * c.support as f64).sum::<f64>() / support as f64;
        prop_assert!((r.weighted_f1 - mean).abs() < 1e-12);
        let correct = p.iter().filter(|(t, q)| t == q).count();
        prop_assert!((r.accuracy - 100.0 * correct as f64 / p.len() as f64).abs() < 1e-12);
    }

    #[test]
    fn metrics_stay_in_percent_range(p in pairs(2)) {
        let cm = ConfusionMatrix::from_pairs(2, p.iter().copied()).unwrap();
        let r = metric_report(&cm, Task::Binary).unwrap();
        let spec = r.specificity.unwrap();
        prop_assert!((0.0..=100.0).contains(&spec));
        for c in &r.classes {
            for v in [c.precision, c.recall, c.f1] {
                prop_assert!((0.0..=100.0).contains(&v));
            }
            prop_assert!(c.f1 <= c.precision.max(c.recall) + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn flip_is_an_involution(seed in 0u64..1000) {
        for s in corpus_utterances(seed, true, false).iter().flat_map(|u| &u.sequences) {
            prop_assert_eq!(&flip_sequence(&flip_sequence(s)), s);
        }
    }

    #[test]
    fn shifted_poses_stay_in_bounds(seed in 0u64..1000) {
        for s in corpus_utterances(seed, true, true).iter().flat_map(|u| &u.sequences) {
            for k in s.frames.iter().flat_map(|f| &f.pose.keypoints).filter(|k| k.is_confident()) {
                prop_assert!((-1.0..=1.0).contains(&k.x), "{} at {}", s.id, k.x);
            }
            if let Some((lo, hi)) = shift_range(s) {
                // a sequence already shifted can still move back to where it was
                prop_assert!(lo <= 1e-12 && hi >= -1e-12);
            }
        }
    }

    #[test]
    fn folds_are_speaker_exclusive(seed in 0u64..1000) {
        let utterances = corpus_utterances(seed, true, true);
        for task in [Task::ThreeClass, Task::Binary] {
            let folds = make_folds(&utterances, &FoldConfig { task, validation_per_class: 2, seed }).unwrap();
            prop_assert_eq!(folds.len(), 3);
            for f in &folds {
                let speaker = |r: &addressee_core::preprocess::SequenceRef| utterances[r.utterance].speaker_id.as_str();
                for v in &f.validation {
                    prop_assert!(f.train.iter().all(|t| speaker(t) != speaker(v)));
                    prop_assert!(f.test.iter().all(|t| speaker(t) != speaker(v)));
                }
                let mut per_class = vec![0; task.class_count()];
                for r in &f.validation {
                    per_class[task.class_of(utterances[r.utterance].label).unwrap()] += 1;
                }
                prop_assert!(per_class.iter().all(|&n| n == 2), "{:?}", per_class);
            }
        }
    }
}
