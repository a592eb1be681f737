//! Processed dataset directory:
//!
//! ```text
//! dataset.txt     face_resolution = R, utterances = N, sequences = M
//! sequences.txt   sequence_id,utterance_id,speaker_id,label,ref0,...,ref9
//! poses.txt       ref,interaction_id,frame_index,timestamp_s,x0,y0,c0,...,x17,y17,c17
//! faces/<ref>.ppm
//! ```
//!
//! Sequences of one utterance are contiguous and in order.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::KeyValues;
use crate::corpus::{
    AddresseeLabel, BodyPose, FaceCrop, FrameRecord, Image, Keypoint, PersonRole, Sequence, Utterance, KEYPOINTS,
    SEQUENCE_FRAMES,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub face_resolution: usize,
    pub utterances: Vec<Utterance>,
}

impl Dataset {
    pub fn sequence_count(&self) -> usize {
        self.utterances.iter().map(|u| u.sequences.len()).sum()
    }
}

fn frame_ref(sequence_id: &str, k: usize) -> String {
    format!("{sequence_id}.f{k}")
}

pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<()> {
    let faces = dir.join("faces");
    fs::create_dir_all(&faces).map_err(|e| Error::io(format!("creating {}", faces.display()), e))?;
    let mut seq_text = String::new();
    let mut pose_text = String::new();
    for u in &dataset.utterances {
        for s in &u.sequences {
            if s.utterance_id != u.id {
                return Err(Error::validation(format!("sequence {} filed under utterance {}", s.id, u.id)));
            }
            write!(seq_text, "{},{},{},{}", s.id, u.id, u.speaker_id, s.label).unwrap();
            for (k, f) in s.frames.iter().enumerate() {
                if f.face.resolution != dataset.face_resolution {
                    return Err(Error::validation(format!(
                        "sequence {} has a {}px face in a {}px dataset",
                        s.id, f.face.resolution, dataset.face_resolution
                    )));
                }
                let r = frame_ref(&s.id, k);
                write!(seq_text, ",{r}").unwrap();
                write!(pose_text, "{r},{},{},{}", f.interaction_id, f.face.source_frame, f.timestamp).unwrap();
                for kp in &f.pose.keypoints {
                    write!(pose_text, ",{},{},{}", kp.x, kp.y, kp.confidence).unwrap();
                }
                pose_text.push('\n');
                f.face.to_image().write(&faces.join(format!("{r}.ppm")))?;
                if f.frame_index != f.face.source_frame {
                    return Err(Error::validation(format!("frame {r}: face and pose come from different frames")));
                }
            }
            seq_text.push('\n');
        }
    }
    let write = |name: &str, text: &str| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(format!("writing {}", p.display()), e))
    };
    let mut header = KeyValues::new();
    header.set("face_resolution", dataset.face_resolution);
    header.set("utterances", dataset.utterances.len());
    header.set("sequences", dataset.sequence_count());
    write("dataset.txt", &header.to_string())?;
    write("sequences.txt", &seq_text)?;
    write("poses.txt", &pose_text)
}

struct PoseLine {
    interaction_id: String,
    frame_index: u64,
    timestamp: f64,
    pose: BodyPose,
}

fn parse_pose_line(path: &Path, no: usize, line: &str) -> Result<(String, PoseLine)> {
    let f: Vec<&str> = line.split(',').collect();
    let expected = 4 + 3 * KEYPOINTS;
    if f.len() != expected {
        return Err(Error::parse(path, no, format!("expected {expected} fields, found {}", f.len())));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::parse(path, no, format!("bad number {s:?}")));
    let mut keypoints = [Keypoint::MISSING; KEYPOINTS];
    for (k, kp) in keypoints.iter_mut().enumerate() {
        *kp = Keypoint { x: num(f[4 + 3 * k])?, y: num(f[5 + 3 * k])?, confidence: num(f[6 + 3 * k])? };
    }
    let pose = BodyPose { keypoints, role: PersonRole::Speaker };
    pose.validate().map_err(|e| Error::parse(path, no, e.to_string()))?;
    Ok((
        f[0].to_string(),
        PoseLine {
            interaction_id: f[1].to_string(),
            frame_index: f[2].parse().map_err(|_| Error::parse(path, no, format!("bad frame index {:?}", f[2])))?,
            timestamp: num(f[3])?,
            pose,
        },
    ))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let header = KeyValues::read(&dir.join("dataset.txt"))?;
    let face_resolution: usize = header
        .parse_opt("face_resolution")?
        .ok_or_else(|| Error::config("dataset.txt lacks face_resolution"))?;

    let pose_path = dir.join("poses.txt");
    let text = fs::read_to_string(&pose_path).map_err(|e| Error::io(format!("reading {}", pose_path.display()), e))?;
    let mut poses = HashMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (r, p) = parse_pose_line(&pose_path, i + 1, line)?;
        poses.insert(r, p);
    }

    let seq_path = dir.join("sequences.txt");
    let text = fs::read_to_string(&seq_path).map_err(|e| Error::io(format!("reading {}", seq_path.display()), e))?;
    let mut utterances: Vec<Utterance> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let no = i + 1;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 + SEQUENCE_FRAMES {
            return Err(Error::parse(&seq_path, no, format!("expected {} fields, found {}", 4 + SEQUENCE_FRAMES, f.len())));
        }
        let label: AddresseeLabel = f[3].parse().map_err(|e: Error| Error::parse(&seq_path, no, e.to_string()))?;
        let mut frames = Vec::with_capacity(SEQUENCE_FRAMES);
        for r in &f[4..] {
            let p = poses
                .remove(*r)
                .ok_or_else(|| Error::parse(&seq_path, no, format!("frame {r} missing from poses.txt")))?;
            let img = Image::read(&dir.join("faces").join(format!("{r}.ppm")))?;
            if img.width != face_resolution || img.height != face_resolution || img.channels != 3 {
                return Err(Error::validation(format!("face {r} is not a {face_resolution}px RGB square")));
            }
            frames.push(FrameRecord {
                interaction_id: p.interaction_id,
                frame_index: p.frame_index,
                timestamp: p.timestamp,
                pose: p.pose,
                face: FaceCrop::new(face_resolution, img.pixels, p.frame_index)?,
                label,
            });
        }
        let (seq_id, utt_id, speaker) = (f[0], f[1], f[2]);
        let continues = utterances.last().is_some_and(|u| u.id == utt_id);
        if !continues {
            if utterances.iter().any(|u| u.id == utt_id) {
                return Err(Error::parse(&seq_path, no, format!("sequences of utterance {utt_id} are not contiguous")));
            }
            utterances.push(Utterance {
                id: utt_id.to_string(),
                interaction_id: frames[0].interaction_id.clone(),
                speaker_id: speaker.to_string(),
                label,
                sequences: Vec::new(),
            });
        }
        let u = utterances.last_mut().unwrap();
        let index_within_utterance = u.sequences.len();
        u.sequences.push(Sequence {
            id: seq_id.to_string(),
            frames,
            label,
            utterance_id: utt_id.to_string(),
            index_within_utterance,
        });
    }
    for u in &utterances {
        u.validate()?;
    }
    Ok(Dataset { face_resolution, utterances })
}
