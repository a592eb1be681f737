use std::collections::BTreeMap;
use std::fmt;

use super::{AddresseeLabel, Utterance};

/// Counts over a set of segmented utterances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CorpusStats {
    pub utterances: usize,
    pub sequences: usize,
    pub frames: usize,
    pub sequences_per_label: BTreeMap<AddresseeLabel, usize>,
    pub frames_per_label: BTreeMap<AddresseeLabel, usize>,
    pub sequences_per_speaker: BTreeMap<String, usize>,
}

impl CorpusStats {
    pub fn sequences_of(&self, label: AddresseeLabel) -> usize {
        self.sequences_per_label.get(&label).copied().unwrap_or(0)
    }

    pub fn frames_of(&self, label: AddresseeLabel) -> usize {
        self.frames_per_label.get(&label).copied().unwrap_or(0)
    }
}

pub fn corpus_stats(utterances: &[Utterance]) -> CorpusStats {
    let mut stats = CorpusStats {
        utterances: utterances.len(),
        ..Default::default()
    };
    for u in utterances {
        for s in &u.sequences {
            stats.sequences += 1;
            stats.frames += s.frames.len();
            *stats.sequences_per_label.entry(s.label).or_default() += 1;
            *stats.frames_per_label.entry(s.label).or_default() += s.frames.len();
            *stats.sequences_per_speaker.entry(u.speaker_id.clone()).or_default() += 1;
        }
    }
    stats
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "utterances = {}", self.utterances)?;
        writeln!(f, "sequences = {}", self.sequences)?;
        writeln!(f, "frames = {}", self.frames)?;
        for label in AddresseeLabel::ALL {
            if let Some(n) = self.sequences_per_label.get(&label) {
                writeln!(f, "sequences.{label} = {n}")?;
                writeln!(f, "frames.{label} = {}", self.frames_of(label))?;
            }
        }
        for (speaker, n) in &self.sequences_per_speaker {
            writeln!(f, "speaker.{speaker} = {n}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{BodyPose, FaceCrop, FrameRecord, Keypoint, PersonRole, Sequence, KEYPOINTS};

    fn utterance(id: &str, speaker: &str, label: AddresseeLabel, sequences: usize) -> Utterance {
        let frame = FrameRecord {
            interaction_id: "i".into(),
            frame_index: 0,
            timestamp: 0.0,
            pose: BodyPose { keypoints: [Keypoint::MISSING; KEYPOINTS], role: PersonRole::Speaker },
            face: FaceCrop::new(1, vec![0; 3], 0).unwrap(),
            label,
        };
        Utterance {
            id: id.into(),
            interaction_id: "i".into(),
            speaker_id: speaker.into(),
            label,
            sequences: (0..sequences)
                .map(|k| Sequence {
                    id: format!("{id}#{k}"),
                    frames: vec![frame.clone(); 10],
                    label,
                    utterance_id: id.into(),
                    index_within_utterance: k,
                })
                .collect(),
        }
    }

    #[test]
    fn one_ten_frame_utterance() {
        let s = corpus_stats(&[utterance("u", "a", AddresseeLabel::Robot, 1)]);
        assert_eq!((s.sequences, s.frames), (1, 10));
        assert_eq!(s.sequences_of(AddresseeLabel::Robot), 1);
        assert_eq!(s.sequences_of(AddresseeLabel::Left), 0);
    }

    #[test]
    fn counts_add_up() {
        let us = [
            utterance("u0", "a", AddresseeLabel::Left, 2),
            utterance("u1", "b", AddresseeLabel::Left, 1),
            utterance("u2", "a", AddresseeLabel::Right, 3),
        ];
        let s = corpus_stats(&us);
        assert_eq!(s.sequences, 6);
        assert_eq!(s.frames_of(AddresseeLabel::Left), 30);
        assert_eq!(s.sequences_per_speaker["a"], 5);
        assert_eq!(s.sequences_per_label.values().sum::<usize>(), s.sequences);
        assert!(s.to_string().contains("sequences.RIGHT = 3"));
    }
}
