//! From raw interactions to labelled 10-frame sequences: utterance
//! segmentation, resampling onto the 0.08 s grid, face cropping, sequence
//! aggregation, flip augmentation and pose shifting; plus the dataset files
//! and the cross-validation folds built from them.

mod augment;
mod crop;
mod dataset;
mod folds;

use std::collections::BTreeMap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use augment::{flip_augment, flip_sequence, flip_utterance, shift_pose, shift_range, FLIP_SUFFIX};
pub use crop::{crop_box, crop_face, CropBox, CROP_SPREAD, MIN_CROP_SIDE};
pub use dataset::{load_dataset, save_dataset, Dataset};
pub use folds::{make_folds, FoldConfig, FoldSplit, SequenceRef};

use crate::config::KeyValues;
use crate::corpus::{
    AddresseeLabel, Corpus, FrameRecord, Interaction, RawFrame, Sequence, SpeechSpan, Utterance, FRAME_PERIOD,
    SEQUENCE_FRAMES,
};
use crate::error::{Error, Result};

/// Time span of one utterance after merging speech segments.
#[derive(Clone, Debug, PartialEq)]
pub struct UtteranceExtent {
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: AddresseeLabel,
    pub start: f64,
    pub end: f64,
}

/// Merges each speaker's consecutive same-label spans separated by at most
/// `min_silence` seconds, then drops NOLABEL utterances. Output is ordered by
/// start time; ids come from the first span of each utterance.
pub fn segment_utterances(spans: &[SpeechSpan], min_silence: f64) -> Result<Vec<UtteranceExtent>> {
    let mut by_speaker: BTreeMap<&str, Vec<&SpeechSpan>> = BTreeMap::new();
    for s in spans {
        by_speaker.entry(&s.speaker_id).or_default().push(s);
    }
    let mut out = Vec::new();
    for (speaker, mut list) in by_speaker {
        list.sort_by(|a, b| a.start.total_cmp(&b.start));
        let mut current: Option<UtteranceExtent> = None;
        for s in list {
            if let Some(cur) = &mut current {
                if s.start < cur.end {
                    return Err(Error::validation(format!(
                        "speaker {speaker}: span {} [{}, {}] overlaps the previous speech ending at {}",
                        s.utterance_id, s.start, s.end, cur.end
                    )));
                }
                if s.label == cur.label && s.start - cur.end <= min_silence + 1e-9 {
                    cur.end = s.end;
                    continue;
                }
                out.extend(current.take());
            }
            current = Some(UtteranceExtent {
                utterance_id: s.utterance_id.clone(),
                speaker_id: speaker.to_string(),
                label: s.label,
                start: s.start,
                end: s.end,
            });
        }
        out.extend(current);
    }
    out.retain(|u| u.label != AddresseeLabel::NoLabel);
    out.sort_by(|a, b| a.start.total_cmp(&b.start).then_with(|| a.speaker_id.cmp(&b.speaker_id)));
    Ok(out)
}

/// Number of grid ticks in an utterance lasting `duration` seconds.
pub fn tick_count(duration: f64) -> usize {
    (duration / FRAME_PERIOD + 1e-9).floor().max(0.0) as usize
}

/// One point of the 0.08 s grid and the raw frame chosen for it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tick {
    pub timestamp: f64,
    /// Index into the raw frame list; `None` when no frame with a SPEAKER
    /// pose lies within one grid period.
    pub frame: Option<usize>,
}

fn nearest(candidates: &[usize], frames: &[RawFrame], t: f64) -> Option<usize> {
    let p = candidates.partition_point(|&i| frames[i].timestamp < t);
    let before = p.checked_sub(1).map(|q| candidates[q]);
    let after = candidates.get(p).copied();
    let best = match (before, after) {
        (Some(b), Some(a)) => {
            if t - frames[b].timestamp <= frames[a].timestamp - t {
                b
            } else {
                a
            }
        }
        (Some(b), None) => b,
        (None, Some(a)) => a,
        (None, None) => return None,
    };
    ((frames[best].timestamp - t).abs() <= FRAME_PERIOD + 1e-9).then_some(best)
}

fn speaker_frames(frames: &[RawFrame]) -> Vec<usize> {
    (0..frames.len()).filter(|&i| frames[i].speaker_pose().is_some()).collect()
}

/// Grid ticks `start + k * 0.08` for `k < floor(duration / 0.08)`, each mapped
/// to the nearest raw frame that has a SPEAKER pose (ties go to the earlier frame).
pub fn resample_frames(start: f64, end: f64, frames: &[RawFrame]) -> Vec<Tick> {
    resample_with(start, end, frames, &speaker_frames(frames))
}

fn resample_with(start: f64, end: f64, frames: &[RawFrame], candidates: &[usize]) -> Vec<Tick> {
    (0..tick_count(end - start))
        .map(|k| {
            let timestamp = start + k as f64 * FRAME_PERIOD;
            Tick { timestamp, frame: nearest(candidates, frames, timestamp) }
        })
        .collect()
}

/// Sequences cut from one utterance's frames.
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregation {
    pub sequences: Vec<Vec<FrameRecord>>,
    /// Frames left over in runs shorter than ten.
    pub dropped: usize,
}

/// Splits the frames at gaps (`None`) and cuts every run into consecutive,
/// non-overlapping windows of ten; remainders are dropped.
pub fn aggregate_sequences(frames: Vec<Option<FrameRecord>>) -> Aggregation {
    let mut sequences = Vec::new();
    let mut dropped = 0;
    let mut run: Vec<FrameRecord> = Vec::new();
    let mut flush = |run: &mut Vec<FrameRecord>, sequences: &mut Vec<Vec<FrameRecord>>| {
        let full = run.len() / SEQUENCE_FRAMES * SEQUENCE_FRAMES;
        dropped += run.len() - full;
        let mut rest = std::mem::take(run);
        rest.truncate(full);
        let mut it = rest.into_iter();
        while it.len() > 0 {
            sequences.push(it.by_ref().take(SEQUENCE_FRAMES).collect());
        }
    };
    for f in frames {
        match f {
            Some(f) => run.push(f),
            None => flush(&mut run, &mut sequences),
        }
    }
    flush(&mut run, &mut sequences);
    Aggregation { sequences, dropped }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreprocessConfig {
    pub face_resolution: usize,
    pub min_silence: f64,
    pub flip: bool,
    pub shift: bool,
    pub seed: u64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            face_resolution: 160,
            min_silence: FRAME_PERIOD,
            flip: true,
            shift: true,
            seed: 0,
        }
    }
}

impl PreprocessConfig {
    pub const KEYS: [&'static str; 5] = ["face_resolution", "min_silence", "flip", "shift", "seed"];

    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.apply("face_resolution", &mut self.face_resolution)?;
        kv.apply("min_silence", &mut self.min_silence)?;
        kv.apply("flip", &mut self.flip)?;
        kv.apply("shift", &mut self.shift)?;
        kv.apply("seed", &mut self.seed)?;
        if self.face_resolution == 0 || !(self.min_silence >= 0.0) {
            return Err(Error::config("face_resolution must be positive and min_silence non-negative"));
        }
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("face_resolution", self.face_resolution);
        kv.set("min_silence", self.min_silence);
        kv.set("flip", self.flip);
        kv.set("shift", self.shift);
        kv.set("seed", self.seed);
        kv
    }
}

/// Bookkeeping of one preprocessing run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PreprocessReport {
    pub utterances: usize,
    pub discarded_utterances: usize,
    pub ticks: usize,
    /// Ticks without a speaker frame or a confident head keypoint.
    pub excluded_ticks: usize,
    pub resampled_frames: usize,
    pub dropped_frames: usize,
    pub sequences: usize,
    pub flipped_utterances: usize,
    pub flipped_sequences: usize,
}

impl PreprocessReport {
    fn add(&mut self, o: &PreprocessReport) {
        self.utterances += o.utterances;
        self.discarded_utterances += o.discarded_utterances;
        self.ticks += o.ticks;
        self.excluded_ticks += o.excluded_ticks;
        self.resampled_frames += o.resampled_frames;
        self.dropped_frames += o.dropped_frames;
        self.sequences += o.sequences;
        self.flipped_utterances += o.flipped_utterances;
        self.flipped_sequences += o.flipped_sequences;
    }
}

impl fmt::Display for PreprocessReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "utterances = {}", self.utterances)?;
        writeln!(f, "discarded_utterances = {}", self.discarded_utterances)?;
        writeln!(f, "ticks = {}", self.ticks)?;
        writeln!(f, "excluded_ticks = {}", self.excluded_ticks)?;
        writeln!(f, "resampled_frames = {}", self.resampled_frames)?;
        writeln!(f, "dropped_frames = {}", self.dropped_frames)?;
        writeln!(f, "sequences = {}", self.sequences)?;
        writeln!(f, "flipped_utterances = {}", self.flipped_utterances)?;
        writeln!(f, "flipped_sequences = {}", self.flipped_sequences)
    }
}

fn extract_utterance(
    interaction: &Interaction,
    extent: &UtteranceExtent,
    candidates: &[usize],
    cfg: &PreprocessConfig,
    report: &mut PreprocessReport,
) -> Option<Utterance> {
    let ticks = resample_with(extent.start, extent.end, &interaction.frames, candidates);
    report.ticks += ticks.len();
    let records: Vec<Option<FrameRecord>> = ticks
        .iter()
        .map(|tick| {
            let raw = &interaction.frames[tick.frame?];
            let pose = raw.speaker_pose()?;
            let face = crop_face(&raw.image, pose, cfg.face_resolution, raw.index)?;
            Some(FrameRecord {
                interaction_id: interaction.id.clone(),
                frame_index: raw.index,
                timestamp: tick.timestamp,
                pose: pose.clone(),
                face,
                label: extent.label,
            })
        })
        .collect();
    let valid = records.iter().filter(|r| r.is_some()).count();
    report.excluded_ticks += records.len() - valid;
    report.resampled_frames += valid;
    let agg = aggregate_sequences(records);
    report.dropped_frames += agg.dropped;
    if agg.sequences.is_empty() {
        report.discarded_utterances += 1;
        return None;
    }
    let id = format!("{}/{}", interaction.id, extent.utterance_id);
    let sequences: Vec<Sequence> = agg
        .sequences
        .into_iter()
        .enumerate()
        .map(|(k, frames)| Sequence {
            id: format!("{}.{}.s{k}", interaction.id, extent.utterance_id),
            frames,
            label: extent.label,
            utterance_id: id.clone(),
            index_within_utterance: k,
        })
        .collect();
    report.sequences += sequences.len();
    Some(Utterance {
        id,
        interaction_id: interaction.id.clone(),
        speaker_id: format!("{}/{}", interaction.id, extent.speaker_id),
        label: extent.label,
        sequences,
    })
}

/// Runs the whole pipeline on one interaction. `position` selects the random
/// stream for pose shifting, so interactions can be processed independently.
pub fn preprocess_interaction(
    interaction: &Interaction,
    position: usize,
    cfg: &PreprocessConfig,
) -> Result<(Vec<Utterance>, PreprocessReport)> {
    let mut report = PreprocessReport::default();
    let extents = segment_utterances(&interaction.spans, cfg.min_silence)
        .map_err(|e| Error::validation(format!("interaction {}: {e}", interaction.id)))?;
    let candidates = speaker_frames(&interaction.frames);
    let mut utterances = Vec::new();
    for extent in &extents {
        report.utterances += 1;
        utterances.extend(extract_utterance(interaction, extent, &candidates, cfg, &mut report));
    }
    if cfg.flip {
        let before = utterances.len();
        utterances = flip_augment(utterances);
        report.flipped_utterances = utterances.len() - before;
        report.flipped_sequences = utterances
            .iter()
            .filter(|u| u.id.ends_with(FLIP_SUFFIX))
            .map(|u| u.sequences.len())
            .sum();
    }
    if cfg.shift {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(position as u64 + 1);
        for s in utterances.iter_mut().flat_map(|u| u.sequences.iter_mut()) {
            shift_pose(s, &mut rng);
        }
    }
    for u in &utterances {
        u.validate()?;
    }
    Ok((utterances, report))
}

pub fn preprocess_corpus(corpus: &Corpus, cfg: &PreprocessConfig) -> Result<(Vec<Utterance>, PreprocessReport)> {
    let mut all = Vec::new();
    let mut report = PreprocessReport::default();
    for (position, interaction) in corpus.interactions.iter().enumerate() {
        let (u, r) = preprocess_interaction(interaction, position, cfg)?;
        all.extend(u);
        report.add(&r);
    }
    Ok((all, report))
}
