use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{BodyPose, Corpus, Image, Interaction, Keypoint, PersonRole, RawFrame, SpeechSpan, KEYPOINTS};
use crate::error::{Error, Result};

const ANNOTATIONS: &str = "annotations.txt";
const POSES: &str = "poses.txt";
const FACES: &str = "faces";
const POSE_FIELDS: usize = 3 + 3 * KEYPOINTS;

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

fn number<T: std::str::FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("{what}: cannot parse {field:?}")))
}

/// Non-empty lines with their 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r'))).filter(|(_, l)| !l.trim().is_empty())
}

fn parse_annotations(path: &Path) -> Result<Vec<SpeechSpan>> {
    let text = read_text(path)?;
    let mut spans = Vec::new();
    for (no, line) in lines(&text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(Error::parse(path, no, format!("expected 5 fields, found {}", f.len())));
        }
        let span = SpeechSpan {
            utterance_id: f[0].trim().to_string(),
            speaker_id: f[1].trim().to_string(),
            start: number(path, no, f[2], "start_s")?,
            end: number(path, no, f[3], "end_s")?,
            label: f[4].trim().parse().map_err(|e: Error| Error::parse(path, no, e.to_string()))?,
        };
        if span.utterance_id.is_empty() || span.speaker_id.is_empty() {
            return Err(Error::parse(path, no, "empty utterance or speaker id"));
        }
        spans.push(span);
    }
    Ok(spans)
}

fn parse_poses(path: &Path) -> Result<Vec<(u64, f64, Vec<BodyPose>)>> {
    let text = read_text(path)?;
    let mut frames: Vec<(u64, f64, Vec<BodyPose>)> = Vec::new();
    for (no, line) in lines(&text) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != POSE_FIELDS {
            return Err(Error::parse(
                path,
                no,
                format!(
                    "expected {POSE_FIELDS} fields (index, timestamp, role, {KEYPOINTS} keypoints x 3), found {}",
                    f.len()
                ),
            ));
        }
        let index: u64 = number(path, no, f[0], "frame_index")?;
        let timestamp: f64 = number(path, no, f[1], "timestamp_s")?;
        let role: PersonRole = f[2].trim().parse().map_err(|e: Error| Error::parse(path, no, e.to_string()))?;
        let mut keypoints = [Keypoint::MISSING; KEYPOINTS];
        for (k, kp) in keypoints.iter_mut().enumerate() {
            kp.x = number(path, no, f[3 + 3 * k], "x")?;
            kp.y = number(path, no, f[4 + 3 * k], "y")?;
            kp.confidence = number(path, no, f[5 + 3 * k], "confidence")?;
        }
        let pose = BodyPose { keypoints, role };
        pose.validate().map_err(|e| Error::parse(path, no, e.to_string()))?;
        match frames.last_mut() {
            Some((last, ts, poses)) if *last == index => {
                if *ts != timestamp {
                    return Err(Error::parse(path, no, format!("frame {index} listed with two timestamps")));
                }
                poses.push(pose);
            }
            Some((last, _, _)) if *last > index => {
                return Err(Error::parse(path, no, format!("frame {index} appears after frame {last}")));
            }
            _ => frames.push((index, timestamp, vec![pose])),
        }
    }
    Ok(frames)
}

fn face_path(dir: &Path, index: u64) -> Option<PathBuf> {
    ["ppm", "pgm"].iter().map(|ext| dir.join(FACES).join(format!("{index}.{ext}"))).find(|p| p.is_file())
}

/// Loads and validates one `<root>/<interaction_id>` directory.
pub fn load_interaction(dir: &Path) -> Result<Interaction> {
    let id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::validation(format!("bad interaction directory {}", dir.display())))?
        .to_string();
    let spans = parse_annotations(&dir.join(ANNOTATIONS))?;
    let mut frames = Vec::new();
    for (index, timestamp, poses) in parse_poses(&dir.join(POSES))? {
        let path = face_path(dir, index)
            .ok_or_else(|| Error::validation(format!("interaction {id}: no image for frame {index}")))?;
        frames.push(RawFrame {
            index,
            timestamp,
            poses,
            image: Image::read(&path)?,
        });
    }
    let interaction = Interaction { id, spans, frames };
    interaction.validate()?;
    Ok(interaction)
}

/// Loads every interaction directory below `root`, sorted by id.
pub fn load_corpus(root: &Path) -> Result<Corpus> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", root.display()), e))?;
        let path = entry.path();
        if path.is_dir() && path.join(ANNOTATIONS).is_file() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(Error::validation(format!("no interactions found in {}", root.display())));
    }
    dirs.sort();
    let interactions = dirs.iter().map(|d| load_interaction(d)).collect::<Result<Vec<_>>>()?;
    Ok(Corpus { interactions })
}

pub fn write_interaction(interaction: &Interaction, root: &Path) -> Result<()> {
    let dir = root.join(&interaction.id);
    let faces = dir.join(FACES);
    fs::create_dir_all(&faces).map_err(|e| Error::io(format!("creating {}", faces.display()), e))?;

    let mut text = String::new();
    for s in &interaction.spans {
        writeln!(text, "{},{},{},{},{}", s.utterance_id, s.speaker_id, s.start, s.end, s.label).unwrap();
    }
    let path = dir.join(ANNOTATIONS);
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;

    let mut text = String::new();
    for frame in &interaction.frames {
        for pose in &frame.poses {
            write!(text, "{},{},{}", frame.index, frame.timestamp, pose.role).unwrap();
            for k in &pose.keypoints {
                write!(text, ",{},{},{}", k.x, k.y, k.confidence).unwrap();
            }
            text.push('\n');
        }
        let ext = if frame.image.channels == 1 { "pgm" } else { "ppm" };
        frame.image.write(&faces.join(format!("{}.{ext}", frame.index)))?;
    }
    let path = dir.join(POSES);
    fs::write(&path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

pub fn write_corpus(corpus: &Corpus, root: &Path) -> Result<()> {
    let mut seen = BTreeMap::new();
    for i in &corpus.interactions {
        if seen.insert(i.id.as_str(), ()).is_some() {
            return Err(Error::validation(format!("duplicate interaction id {}", i.id)));
        }
        write_interaction(i, root)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::AddresseeLabel;

    fn tiny_interaction() -> Interaction {
        let mut keypoints = [Keypoint::MISSING; KEYPOINTS];
        keypoints[0] = Keypoint { x: 0.1, y: -0.3, confidence: 0.75 };
        keypoints[16] = Keypoint { x: -1.0, y: 1.0, confidence: 1.0 };
        let speaker = BodyPose { keypoints, role: PersonRole::Speaker };
        let other = BodyPose { keypoints: [Keypoint::MISSING; KEYPOINTS], role: PersonRole::Other };
        let image = Image::from_pixels(2, 2, 3, (0..12).collect()).unwrap();
        Interaction {
            id: "int00".into(),
            spans: vec![SpeechSpan {
                utterance_id: "u0".into(),
                speaker_id: "int00/a".into(),
                start: 0.1,
                end: 1.0 / 3.0,
                label: AddresseeLabel::Robot,
            }],
            frames: vec![
                RawFrame { index: 0, timestamp: 0.0, poses: vec![speaker.clone(), other.clone()], image: image.clone() },
                RawFrame { index: 3, timestamp: 0.2 + 1e-13, poses: vec![other], image },
            ],
        }
    }

    #[test]
    fn write_then_load_is_identical() {
        let dir = tempfile::tempdir().unwrap();
        let corpus = Corpus { interactions: vec![tiny_interaction()] };
        write_corpus(&corpus, dir.path()).unwrap();
        assert_eq!(load_corpus(dir.path()).unwrap(), corpus);
    }

    #[test]
    fn empty_directory_has_no_interactions() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no interactions found"), "{err}");
    }

    #[test]
    fn short_pose_line_names_file_and_line() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&Corpus { interactions: vec![tiny_interaction()] }, dir.path()).unwrap();
        let poses = dir.path().join("int00").join(POSES);
        let mut text = fs::read_to_string(&poses).unwrap();
        // drop the last keypoint triple from the second line: 17 keypoints
        let lines: Vec<String> = text.lines().map(String::from).collect();
        let fields: Vec<&str> = lines[1].split(',').collect();
        let short = fields[..fields.len() - 3].join(",");
        text = format!("{}\n{}\n{}\n", lines[0], short, lines[2]);
        fs::write(&poses, text).unwrap();
        match load_corpus(dir.path()).unwrap_err() {
            Error::Parse { path, line, message } => {
                assert!(path.ends_with("poses.txt"));
                assert_eq!(line, 2);
                assert!(message.contains("found 54"), "{message}");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn bad_label_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        write_corpus(&Corpus { interactions: vec![tiny_interaction()] }, dir.path()).unwrap();
        fs::write(dir.path().join("int00").join(ANNOTATIONS), "u0,a,0,1,ROBOT\nu1,a,1,2,SIDEWAYS\n").unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn out_of_range_keypoint_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut i = tiny_interaction();
        i.frames[0].poses[0].keypoints[1].x = 1.5;
        write_corpus(&Corpus { interactions: vec![i] }, dir.path()).unwrap();
        assert!(matches!(load_corpus(dir.path()), Err(Error::Parse { line: 1, .. })));
    }
}
