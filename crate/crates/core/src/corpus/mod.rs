//! Data model of recorded multiparty interactions and the on-disk corpus layout.
//!
//! ```text
//! <root>/<interaction_id>/annotations.txt   utterance_id,speaker_id,start_s,end_s,label
//! <root>/<interaction_id>/poses.txt         frame_index,timestamp_s,role,x0,y0,c0,...,x17,y17,c17
//! <root>/<interaction_id>/faces/<frame_index>.ppm|pgm
//! ```
//!
//! Each `faces/` pixmap is the robot-camera frame the poses were extracted
//! from; face crops are cut from it during preprocessing.

mod format;
pub mod pnm;
mod stats;

use std::fmt;
use std::str::FromStr;

pub use format::{load_corpus, load_interaction, write_corpus, write_interaction};
pub use pnm::Image;
pub use stats::{corpus_stats, CorpusStats};

use crate::error::{Error, Result};

/// Number of COCO body keypoints.
pub const KEYPOINTS: usize = 18;

/// Frames per sequence.
pub const SEQUENCE_FRAMES: usize = 10;

/// Spacing of the resampled frame grid, in seconds.
pub const FRAME_PERIOD: f64 = 0.08;

/// COCO indices of the five head keypoints: nose, eyes, ears.
pub const HEAD_KEYPOINTS: [usize; 5] = [0, 14, 15, 16, 17];

/// Anatomical left/right keypoint pairs of the COCO 18-point skeleton.
pub const MIRROR_PAIRS: [(usize, usize); 8] = [(2, 5), (3, 6), (4, 7), (8, 11), (9, 12), (10, 13), (14, 15), (16, 17)];

/// Continuous pixel coordinate of normalized coordinate `v` along an axis of
/// `size` pixels. Pixel `i` covers `[i, i + 1)`.
pub fn to_pixel(v: f64, size: usize) -> f64 {
    (v + 1.0) * 0.5 * size as f64
}

/// Inverse of [`to_pixel`].
pub fn to_normalized(p: f64, size: usize) -> f64 {
    p / size as f64 * 2.0 - 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AddresseeLabel {
    Left,
    Right,
    Robot,
    Group,
    NoLabel,
}

impl AddresseeLabel {
    pub const ALL: [AddresseeLabel; 5] = [
        AddresseeLabel::Left,
        AddresseeLabel::Right,
        AddresseeLabel::Robot,
        AddresseeLabel::Group,
        AddresseeLabel::NoLabel,
    ];

    /// Mirror image label: LEFT and RIGHT swap, everything else is fixed.
    pub fn mirrored(self) -> Self {
        match self {
            AddresseeLabel::Left => AddresseeLabel::Right,
            AddresseeLabel::Right => AddresseeLabel::Left,
            other => other,
        }
    }
}

impl fmt::Display for AddresseeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AddresseeLabel::Left => "LEFT",
            AddresseeLabel::Right => "RIGHT",
            AddresseeLabel::Robot => "ROBOT",
            AddresseeLabel::Group => "GROUP",
            AddresseeLabel::NoLabel => "NOLABEL",
        })
    }
}

impl FromStr for AddresseeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "LEFT" => AddresseeLabel::Left,
            "RIGHT" => AddresseeLabel::Right,
            "ROBOT" => AddresseeLabel::Robot,
            "GROUP" => AddresseeLabel::Group,
            "NOLABEL" => AddresseeLabel::NoLabel,
            other => return Err(Error::validation(format!("unknown addressee label {other:?}"))),
        })
    }
}

/// Which label space a model predicts in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Task {
    /// LEFT / ROBOT / RIGHT; GROUP and NOLABEL are excluded.
    ThreeClass,
    /// NOT_ADDRESSED (LEFT, RIGHT) vs ADDRESSED (ROBOT, GROUP).
    Binary,
}

impl Task {
    pub fn class_count(self) -> usize {
        match self {
            Task::ThreeClass => 3,
            Task::Binary => 2,
        }
    }

    pub fn class_names(self) -> &'static [&'static str] {
        match self {
            Task::ThreeClass => &["LEFT", "ROBOT", "RIGHT"],
            Task::Binary => &["NOT_ADDRESSED", "ADDRESSED"],
        }
    }

    /// Class index of `label`, or `None` when the task excludes it.
    pub fn class_of(self, label: AddresseeLabel) -> Option<usize> {
        use AddresseeLabel::*;
        match (self, label) {
            (Task::ThreeClass, Left) => Some(0),
            (Task::ThreeClass, Robot) => Some(1),
            (Task::ThreeClass, Right) => Some(2),
            (Task::ThreeClass, _) => None,
            (Task::Binary, Left | Right) => Some(0),
            (Task::Binary, Robot | Group) => Some(1),
            (Task::Binary, NoLabel) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PersonRole {
    Speaker,
    Other,
}

impl fmt::Display for PersonRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PersonRole::Speaker => "SPEAKER",
            PersonRole::Other => "OTHER",
        })
    }
}

impl FromStr for PersonRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SPEAKER" => Ok(PersonRole::Speaker),
            "OTHER" => Ok(PersonRole::Other),
            other => Err(Error::validation(format!("unknown person role {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl Keypoint {
    pub const MISSING: Keypoint = Keypoint {
        x: 0.0,
        y: 0.0,
        confidence: 0.0,
    };

    pub fn is_confident(&self) -> bool {
        self.confidence > 0.0
    }
}

/// 18 COCO keypoints in normalized image coordinates (`[-1, 1]` on both axes).
#[derive(Clone, Debug, PartialEq)]
pub struct BodyPose {
    pub keypoints: [Keypoint; KEYPOINTS],
    pub role: PersonRole,
}

impl BodyPose {
    pub fn validate(&self) -> Result<()> {
        for (i, k) in self.keypoints.iter().enumerate() {
            let in_range = (-1.0..=1.0).contains(&k.x) && (-1.0..=1.0).contains(&k.y) && (0.0..=1.0).contains(&k.confidence);
            if !in_range {
                return Err(Error::validation(format!(
                    "keypoint {i} = ({}, {}, {}) outside [-1,1]x[-1,1]x[0,1]",
                    k.x, k.y, k.confidence
                )));
            }
        }
        Ok(())
    }

    /// Mirror about the vertical axis: negate x and swap anatomical sides.
    pub fn mirrored(&self) -> BodyPose {
        let mut keypoints = self.keypoints;
        for k in keypoints.iter_mut() {
            k.x = -k.x;
        }
        for (a, b) in MIRROR_PAIRS {
            keypoints.swap(a, b);
        }
        BodyPose {
            keypoints,
            role: self.role,
        }
    }

    /// Flattened `(x, y, confidence)` triples.
    pub fn to_array(&self) -> [f64; KEYPOINTS * 3] {
        let mut out = [0.0; KEYPOINTS * 3];
        for (i, k) in self.keypoints.iter().enumerate() {
            out[3 * i] = k.x;
            out[3 * i + 1] = k.y;
            out[3 * i + 2] = k.confidence;
        }
        out
    }
}

/// Square RGB face image, 8 bits per channel, row-major HWC.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaceCrop {
    pub resolution: usize,
    pub pixels: Vec<u8>,
    pub source_frame: u64,
}

impl FaceCrop {
    pub fn new(resolution: usize, pixels: Vec<u8>, source_frame: u64) -> Result<Self> {
        if resolution == 0 || pixels.len() != resolution * resolution * 3 {
            return Err(Error::validation(format!(
                "face crop of side {resolution} cannot hold {} bytes",
                pixels.len()
            )));
        }
        Ok(FaceCrop {
            resolution,
            pixels,
            source_frame,
        })
    }

    /// Intensity in `[0, 1]` at row `y`, column `x`, channel `c`.
    pub fn value(&self, y: usize, x: usize, c: usize) -> f64 {
        self.pixels[(y * self.resolution + x) * 3 + c] as f64 / 255.0
    }

    pub fn mirrored(&self) -> FaceCrop {
        let r = self.resolution;
        let mut pixels = Vec::with_capacity(self.pixels.len());
        for y in 0..r {
            for x in (0..r).rev() {
                let i = (y * r + x) * 3;
                pixels.extend_from_slice(&self.pixels[i..i + 3]);
            }
        }
        FaceCrop {
            resolution: r,
            pixels,
            source_frame: self.source_frame,
        }
    }

    pub fn to_image(&self) -> Image {
        Image::from_pixels(self.resolution, self.resolution, 3, self.pixels.clone()).expect("square RGB crop")
    }
}

/// One speech segment from the annotation track.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeechSpan {
    pub utterance_id: String,
    pub speaker_id: String,
    pub start: f64,
    pub end: f64,
    pub label: AddresseeLabel,
}

/// One raw camera frame with every person's pose.
#[derive(Clone, Debug, PartialEq)]
pub struct RawFrame {
    pub index: u64,
    pub timestamp: f64,
    pub poses: Vec<BodyPose>,
    pub image: Image,
}

impl RawFrame {
    pub fn speaker_pose(&self) -> Option<&BodyPose> {
        self.poses.iter().find(|p| p.role == PersonRole::Speaker)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub id: String,
    pub spans: Vec<SpeechSpan>,
    pub frames: Vec<RawFrame>,
}

impl Interaction {
    pub fn validate(&self) -> Result<()> {
        for span in &self.spans {
            if !(span.start.is_finite() && span.end.is_finite() && span.start < span.end) {
                return Err(Error::validation(format!(
                    "interaction {}: span {} has start {} >= end {}",
                    self.id, span.utterance_id, span.start, span.end
                )));
            }
        }
        for pair in self.frames.windows(2) {
            if pair[1].index <= pair[0].index || pair[1].timestamp < pair[0].timestamp {
                return Err(Error::validation(format!(
                    "interaction {}: frame {} does not follow frame {} in index and time",
                    self.id, pair[1].index, pair[0].index
                )));
            }
        }
        for frame in &self.frames {
            for pose in &frame.poses {
                pose.validate()
                    .map_err(|e| Error::validation(format!("interaction {} frame {}: {e}", self.id, frame.index)))?;
            }
            let speakers = frame.poses.iter().filter(|p| p.role == PersonRole::Speaker).count();
            if speakers > 1 {
                return Err(Error::validation(format!(
                    "interaction {} frame {} has {speakers} SPEAKER poses",
                    self.id, frame.index
                )));
            }
        }
        Ok(())
    }
}

/// A loaded corpus; interactions are sorted by id.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Corpus {
    pub interactions: Vec<Interaction>,
}

/// One resampled speaker frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameRecord {
    pub interaction_id: String,
    pub frame_index: u64,
    pub timestamp: f64,
    pub pose: BodyPose,
    pub face: FaceCrop,
    pub label: AddresseeLabel,
}

/// Ten consecutive frames of one utterance.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub id: String,
    pub frames: Vec<FrameRecord>,
    pub label: AddresseeLabel,
    pub utterance_id: String,
    pub index_within_utterance: usize,
}

impl Sequence {
    pub fn validate(&self) -> Result<()> {
        if self.frames.len() != SEQUENCE_FRAMES {
            return Err(Error::validation(format!(
                "sequence {} has {} frames, expected {SEQUENCE_FRAMES}",
                self.id,
                self.frames.len()
            )));
        }
        let first = &self.frames[0];
        for f in &self.frames {
            if f.label != self.label || f.interaction_id != first.interaction_id {
                return Err(Error::validation(format!(
                    "sequence {} mixes labels or interactions",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub interaction_id: String,
    pub speaker_id: String,
    pub label: AddresseeLabel,
    pub sequences: Vec<Sequence>,
}

impl Utterance {
    pub fn validate(&self) -> Result<()> {
        if self.sequences.is_empty() {
            return Err(Error::validation(format!("utterance {} has no sequences", self.id)));
        }
        for s in &self.sequences {
            s.validate()?;
            if s.label != self.label || s.utterance_id != self.id {
                return Err(Error::validation(format!(
                    "sequence {} does not belong to utterance {} ({})",
                    s.id, self.id, self.label
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_text_round_trip() {
        for l in AddresseeLabel::ALL {
            assert_eq!(l.to_string().parse::<AddresseeLabel>().unwrap(), l);
        }
        assert!("left".parse::<AddresseeLabel>().is_err());
    }

    #[test]
    fn binary_mapping_merges_robot_and_group() {
        use AddresseeLabel::*;
        assert_eq!(Task::Binary.class_of(Robot), Some(1));
        assert_eq!(Task::Binary.class_of(Group), Some(1));
        assert_eq!(Task::Binary.class_of(Left), Some(0));
        assert_eq!(Task::Binary.class_of(Right), Some(0));
        assert_eq!(Task::Binary.class_of(NoLabel), None);
        assert_eq!(Task::ThreeClass.class_of(Group), None);
        assert_eq!(Task::ThreeClass.class_of(Robot), Some(1));
    }

    #[test]
    fn pose_mirror_negates_x_and_swaps_sides() {
        let mut keypoints = [Keypoint::MISSING; KEYPOINTS];
        keypoints[0] = Keypoint { x: 0.3, y: -0.5, confidence: 0.9 };
        keypoints[2] = Keypoint { x: -0.2, y: 0.0, confidence: 1.0 };
        let pose = BodyPose { keypoints, role: PersonRole::Speaker };
        let m = pose.mirrored();
        assert_eq!(m.keypoints[0].x, -0.3);
        assert_eq!(m.keypoints[0].y, -0.5);
        assert_eq!(m.keypoints[5].x, 0.2);
        assert_eq!(m.keypoints[2], Keypoint { x: -0.0, ..Keypoint::MISSING });
        assert_eq!(m.mirrored(), pose);
    }

    #[test]
    fn pose_validation_bounds() {
        let mut pose = BodyPose { keypoints: [Keypoint::MISSING; KEYPOINTS], role: PersonRole::Other };
        assert!(pose.validate().is_ok());
        pose.keypoints[3].x = 1.2;
        assert!(pose.validate().is_err());
    }

    #[test]
    fn face_mirror_is_involution() {
        let pixels: Vec<u8> = (0..4 * 4 * 3).map(|i| i as u8).collect();
        let face = FaceCrop::new(4, pixels, 7).unwrap();
        let m = face.mirrored();
        assert_eq!(m.pixels[0..3], face.pixels[9..12]);
        assert_eq!(m.mirrored(), face);
        assert!(FaceCrop::new(4, vec![0; 10], 0).is_err());
    }
}
