use rand::RngExt;

use crate::corpus::{AddresseeLabel, Sequence, Utterance};

/// Suffix marking mirrored copies of utterances and sequences.
pub const FLIP_SUFFIX: &str = "~flip";

fn toggle_suffix(id: &str) -> String {
    match id.strip_suffix(FLIP_SUFFIX) {
        Some(base) => base.to_string(),
        None => format!("{id}{FLIP_SUFFIX}"),
    }
}

/// Mirror image of a sequence: faces and poses reflected, LEFT and RIGHT
/// swapped. Applying it twice gives back the original.
pub fn flip_sequence(s: &Sequence) -> Sequence {
    Sequence {
        id: toggle_suffix(&s.id),
        frames: s
            .frames
            .iter()
            .map(|f| {
                let mut f = f.clone();
                f.pose = f.pose.mirrored();
                f.face = f.face.mirrored();
                f.label = f.label.mirrored();
                f
            })
            .collect(),
        label: s.label.mirrored(),
        utterance_id: toggle_suffix(&s.utterance_id),
        index_within_utterance: s.index_within_utterance,
    }
}

pub fn flip_utterance(u: &Utterance) -> Utterance {
    Utterance {
        id: toggle_suffix(&u.id),
        interaction_id: u.interaction_id.clone(),
        speaker_id: u.speaker_id.clone(),
        label: u.label.mirrored(),
        sequences: u.sequences.iter().map(flip_sequence).collect(),
    }
}

/// Appends a mirrored copy of every LEFT and RIGHT utterance; other labels are
/// left alone. Each copy directly follows its original.
pub fn flip_augment(utterances: Vec<Utterance>) -> Vec<Utterance> {
    let mut out = Vec::with_capacity(utterances.len() * 2);
    for u in utterances {
        let flipped = matches!(u.label, AddresseeLabel::Left | AddresseeLabel::Right).then(|| flip_utterance(&u));
        out.push(u);
        out.extend(flipped);
    }
    out
}

/// Range of horizontal offsets that keep every confident keypoint of the
/// sequence inside `[-1, 1]`, or `None` when nothing is confident.
pub fn shift_range(s: &Sequence) -> Option<(f64, f64)> {
    let xs = s
        .frames
        .iter()
        .flat_map(|f| f.pose.keypoints.iter())
        .filter(|k| k.is_confident())
        .map(|k| k.x);
    let (lo, hi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
    lo.is_finite().then(|| (-1.0 - lo, 1.0 - hi))
}

/// Moves every confident keypoint of all ten poses by one random horizontal
/// offset drawn uniformly from [`shift_range`]. Returns the offset applied.
pub fn shift_pose<R: RngExt + ?Sized>(s: &mut Sequence, rng: &mut R) -> f64 {
    let Some((lo, hi)) = shift_range(s) else { return 0.0 };
    let offset = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    for f in &mut s.frames {
        for k in f.pose.keypoints.iter_mut().filter(|k| k.is_confident()) {
            k.x = (k.x + offset).clamp(-1.0, 1.0);
        }
    }
    offset
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BodyPose, FaceCrop, FrameRecord, Keypoint, PersonRole, KEYPOINTS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sequence(label: AddresseeLabel, xs: &[f64]) -> Sequence {
        let frames = (0..10)
            .map(|i| {
                let mut keypoints = [Keypoint::MISSING; KEYPOINTS];
                for (k, &x) in xs.iter().enumerate() {
                    keypoints[k] = Keypoint { x, y: 0.1 * k as f64, confidence: 0.9 };
                }
                FrameRecord {
                    interaction_id: "int00".into(),
                    frame_index: i,
                    timestamp: i as f64 * 0.08,
                    pose: BodyPose { keypoints, role: PersonRole::Speaker },
                    face: FaceCrop::new(2, (0..12).collect(), i).unwrap(),
                    label,
                }
            })
            .collect();
        Sequence { id: "int00.u000.s0".into(), frames, label, utterance_id: "int00/u000".into(), index_within_utterance: 0 }
    }

    #[test]
    fn flip_is_an_involution() {
        let s = sequence(AddresseeLabel::Left, &[0.3, -0.2, 0.5]);
        let f = flip_sequence(&s);
        assert_eq!(f.label, AddresseeLabel::Right);
        assert_eq!(f.frames[0].pose.keypoints[0].x, -0.3);
        assert_eq!(f.id, "int00.u000.s0~flip");
        assert_eq!(flip_sequence(&f), s);
    }

    #[test]
    fn shift_interval_arithmetic() {
        let s = sequence(AddresseeLabel::Robot, &[-0.2, 0.5]);
        let (lo, hi) = shift_range(&s).unwrap();
        assert!((lo + 0.8).abs() < 1e-12 && (hi - 0.5).abs() < 1e-12);
        let full = sequence(AddresseeLabel::Robot, &[-1.0, 1.0]);
        let mut shifted = full.clone();
        assert_eq!(shift_pose(&mut shifted, &mut ChaCha8Rng::seed_from_u64(1)), 0.0);
        assert_eq!(shifted, full);
    }

    #[test]
    fn shift_keeps_confident_keypoints_in_frame_and_leaves_rest() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let mut s = sequence(AddresseeLabel::Right, &[-0.9, 0.2, 0.95]);
            let before = s.clone();
            let off = shift_pose(&mut s, &mut rng);
            for (a, b) in s.frames.iter().zip(&before.frames) {
                for (ka, kb) in a.pose.keypoints.iter().zip(&b.pose.keypoints) {
                    assert!((-1.0..=1.0).contains(&ka.x));
                    assert_eq!((ka.y, ka.confidence), (kb.y, kb.confidence));
                    if !kb.is_confident() {
                        assert_eq!(ka, kb);
                    } else {
                        assert!((ka.x - kb.x - off).abs() < 1e-12);
                    }
                }
                assert_eq!(a.face, b.face);
            }
        }
    }

    #[test]
    fn same_seed_same_offsets() {
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..5).map(|_| shift_pose(&mut sequence(AddresseeLabel::Robot, &[0.0]), &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(run(3), run(3));
        assert_ne!(run(3), run(4));
    }
}
