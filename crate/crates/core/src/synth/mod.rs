//! Seeded generator of synthetic two-person interactions whose addressee
//! labels are recoverable from the speaker's head yaw.
//!
//! Each utterance draws a label; on every frame the speaker's head turns to
//! the label's canonical direction (LEFT -60 deg, ROBOT 0, RIGHT +60 deg)
//! plus Gaussian noise, unless a triadic glance at some other target
//! overrides it. The rendered face is a disc with two eye dots placed on a
//! virtual sphere, so their horizontal offset encodes the yaw; the shoulders
//! and hips follow an exponentially smoothed yaw.

mod render;

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::KeyValues;
use crate::corpus::{
    to_normalized, write_interaction, AddresseeLabel, BodyPose, Corpus, Interaction, Keypoint, PersonRole, RawFrame,
    SpeechSpan, FRAME_PERIOD, KEYPOINTS, SEQUENCE_FRAMES,
};
use crate::error::{Error, Result};
use render::Canvas;

/// Labels with a fixed gaze direction, in the order of [`ScenarioConfig::label_probs`].
pub const LABEL_ORDER: [AddresseeLabel; 4] =
    [AddresseeLabel::Left, AddresseeLabel::Right, AddresseeLabel::Robot, AddresseeLabel::Group];

/// Head yaw pointing at the addressee of `label`, in radians.
pub fn canonical_yaw(label: AddresseeLabel) -> Option<f64> {
    match label {
        AddresseeLabel::Left => Some(-PI / 3.0),
        AddresseeLabel::Robot => Some(0.0),
        AddresseeLabel::Right => Some(PI / 3.0),
        _ => None,
    }
}

/// Nearest canonical direction to `yaw` (radians). Yaws exactly 30 degrees
/// off axis count as ROBOT.
pub fn oracle_label(yaw: f64) -> AddresseeLabel {
    if yaw.abs() <= FRAC_PI_6 + 1e-9 {
        AddresseeLabel::Robot
    } else if yaw < 0.0 {
        AddresseeLabel::Left
    } else {
        AddresseeLabel::Right
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelSampling {
    /// Independent draw per utterance.
    Iid,
    /// Per interaction, exact largest-remainder quotas in shuffled order.
    Stratified,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub interactions: usize,
    pub utterances_per_interaction: usize,
    /// Utterance durations are uniform on `[duration_min, duration_max]` seconds.
    pub duration_min: f64,
    pub duration_max: f64,
    /// Silence between consecutive utterances, uniform, seconds.
    pub gap_min: f64,
    pub gap_max: f64,
    /// Probabilities of LEFT, RIGHT, ROBOT, GROUP.
    pub label_probs: [f64; 4],
    pub label_sampling: LabelSampling,
    /// Standard deviation of the per-frame head-yaw noise, radians.
    pub yaw_noise: f64,
    pub glance_probability: f64,
    pub glance_duration: f64,
    /// Chance that an utterance is annotated as two spans separated by a short pause.
    pub split_probability: f64,
    pub image_width: usize,
    pub image_height: usize,
    pub face_radius: f64,
    pub fps: f64,
    /// Relative jitter of the frame interval.
    pub fps_jitter: f64,
    pub pixel_noise: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            interactions: 10,
            utterances_per_interaction: 46,
            duration_min: 0.8,
            duration_max: 4.0,
            gap_min: 0.25,
            gap_max: 0.6,
            label_probs: [0.2, 0.2, 0.5, 0.1],
            label_sampling: LabelSampling::Iid,
            yaw_noise: 0.15,
            glance_probability: 0.1,
            glance_duration: 0.4,
            split_probability: 0.3,
            image_width: 96,
            image_height: 72,
            face_radius: 8.0,
            fps: 15.0,
            fps_jitter: 0.2,
            pixel_noise: 3.0,
            seed: 0,
        }
    }
}

const KEYS: [&str; 22] = [
    "interactions",
    "utterances_per_interaction",
    "duration_min",
    "duration_max",
    "gap_min",
    "gap_max",
    "label_left",
    "label_right",
    "label_robot",
    "label_group",
    "label_sampling",
    "yaw_noise",
    "glance_probability",
    "glance_duration",
    "split_probability",
    "image_width",
    "image_height",
    "face_radius",
    "fps",
    "fps_jitter",
    "pixel_noise",
    "seed",
];

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::config(m));
        if self.interactions == 0 || self.utterances_per_interaction == 0 {
            return bad("at least one interaction with one utterance is required".into());
        }
        if self.label_probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (self.label_probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return bad(format!("label probabilities {:?} must be in [0,1] and sum to 1", self.label_probs));
        }
        if !(self.yaw_noise >= 0.0) || !(self.pixel_noise >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(self.duration_min > 0.0 && self.duration_min <= self.duration_max) {
            return bad(format!("bad duration range [{}, {}]", self.duration_min, self.duration_max));
        }
        let shortest_useful = FRAME_PERIOD * SEQUENCE_FRAMES as f64;
        if self.duration_max < shortest_useful {
            return bad(format!(
                "unsatisfiable duration distribution: every utterance is shorter than {shortest_useful} s"
            ));
        }
        if !(self.gap_min > FRAME_PERIOD && self.gap_min <= self.gap_max) {
            return bad(format!("silence gaps must exceed {FRAME_PERIOD} s"));
        }
        if !(0.0..=1.0).contains(&self.glance_probability) || !(0.0..=1.0).contains(&self.split_probability) {
            return bad("glance and split probabilities must be in [0,1]".into());
        }
        if self.image_width < 32 || self.image_height < 32 || !(self.face_radius >= 2.0) {
            return bad("image must be at least 32x32 with a face radius of at least 2 px".into());
        }
        if !(self.fps > 0.0) || !(0.0..1.0).contains(&self.fps_jitter) {
            return bad("fps must be positive and jitter in [0,1)".into());
        }
        Ok(())
    }

    /// Applies the keys present in `kv` on top of `self`.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.check_known(&KEYS)?;
        kv.apply("interactions", &mut self.interactions)?;
        kv.apply("utterances_per_interaction", &mut self.utterances_per_interaction)?;
        kv.apply("duration_min", &mut self.duration_min)?;
        kv.apply("duration_max", &mut self.duration_max)?;
        kv.apply("gap_min", &mut self.gap_min)?;
        kv.apply("gap_max", &mut self.gap_max)?;
        for (i, key) in ["label_left", "label_right", "label_robot", "label_group"].iter().enumerate() {
            kv.apply(key, &mut self.label_probs[i])?;
        }
        if let Some(s) = kv.get("label_sampling") {
            self.label_sampling = match s {
                "iid" => LabelSampling::Iid,
                "stratified" => LabelSampling::Stratified,
                other => return Err(Error::config(format!("label_sampling must be iid or stratified, got {other:?}"))),
            };
        }
        kv.apply("yaw_noise", &mut self.yaw_noise)?;
        kv.apply("glance_probability", &mut self.glance_probability)?;
        kv.apply("glance_duration", &mut self.glance_duration)?;
        kv.apply("split_probability", &mut self.split_probability)?;
        kv.apply("image_width", &mut self.image_width)?;
        kv.apply("image_height", &mut self.image_height)?;
        kv.apply("face_radius", &mut self.face_radius)?;
        kv.apply("fps", &mut self.fps)?;
        kv.apply("fps_jitter", &mut self.fps_jitter)?;
        kv.apply("pixel_noise", &mut self.pixel_noise)?;
        kv.apply("seed", &mut self.seed)?;
        Ok(())
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("interactions", self.interactions);
        kv.set("utterances_per_interaction", self.utterances_per_interaction);
        kv.set("duration_min", self.duration_min);
        kv.set("duration_max", self.duration_max);
        kv.set("gap_min", self.gap_min);
        kv.set("gap_max", self.gap_max);
        for (i, key) in ["label_left", "label_right", "label_robot", "label_group"].iter().enumerate() {
            kv.set(key, self.label_probs[i]);
        }
        kv.set(
            "label_sampling",
            match self.label_sampling {
                LabelSampling::Iid => "iid",
                LabelSampling::Stratified => "stratified",
            },
        );
        kv.set("yaw_noise", self.yaw_noise);
        kv.set("glance_probability", self.glance_probability);
        kv.set("glance_duration", self.glance_duration);
        kv.set("split_probability", self.split_probability);
        kv.set("image_width", self.image_width);
        kv.set("image_height", self.image_height);
        kv.set("face_radius", self.face_radius);
        kv.set("fps", self.fps);
        kv.set("fps_jitter", self.fps_jitter);
        kv.set("pixel_noise", self.pixel_noise);
        kv.set("seed", self.seed);
        kv
    }
}

/// Ground truth for one speaker frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameTruth {
    pub interaction_id: String,
    pub frame_index: u64,
    pub utterance_id: String,
    pub label: AddresseeLabel,
    /// Yaw before noise, including any glance override.
    pub clean_yaw: f64,
    /// Rendered yaw.
    pub yaw: f64,
    /// Rendered head centre in pixels.
    pub head_center: (f64, f64),
    /// The frame falls inside a triadic glance.
    pub in_glance: bool,
}

#[derive(Clone, Debug)]
pub struct SyntheticInteraction {
    pub interaction: Interaction,
    pub truth: Vec<FrameTruth>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SynthSummary {
    pub interactions: usize,
    pub utterances: usize,
    pub frames: usize,
    pub labels: BTreeMap<AddresseeLabel, usize>,
}

pub fn interaction_id(index: usize) -> String {
    format!("int{index:02}")
}

struct Person {
    base_x: f64,
    head_y: f64,
    skin: [f64; 3],
    shirt: [f64; 3],
    sway_freq: f64,
    sway_phase: f64,
}

struct Planned {
    id: String,
    speaker: usize,
    label: AddresseeLabel,
    start: f64,
    end: f64,
    glance: Option<(f64, f64, f64)>,
    group_side: f64,
    group_phase: usize,
}

/// Pose of one person on one frame, in pixels.
struct PersonState {
    cx: f64,
    cy: f64,
    yaw: f64,
    body_yaw: f64,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn draw_labels(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<AddresseeLabel> {
    let n = cfg.utterances_per_interaction;
    match cfg.label_sampling {
        LabelSampling::Iid => (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (label, p) in LABEL_ORDER.iter().zip(cfg.label_probs) {
                    acc += p;
                    if u < acc {
                        return *label;
                    }
                }
                // rounding left a sliver above the last cumulative sum
                *LABEL_ORDER.iter().zip(cfg.label_probs).rev().find(|(_, p)| *p > 0.0).unwrap().0
            })
            .collect(),
        LabelSampling::Stratified => {
            let exact: Vec<f64> = cfg.label_probs.iter().map(|p| p * n as f64).collect();
            let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
            let mut order: Vec<usize> = (0..4).collect();
            order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
            let missing = n - counts.iter().sum::<usize>();
            for &i in order.iter().take(missing) {
                counts[i] += 1;
            }
            let mut labels: Vec<AddresseeLabel> =
                counts.iter().zip(LABEL_ORDER).flat_map(|(&c, l)| std::iter::repeat_n(l, c)).collect();
            labels.shuffle(rng);
            labels
        }
    }
}

fn plan(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> (Vec<Planned>, Vec<SpeechSpan>) {
    let labels = draw_labels(cfg, rng);
    let mut t = uniform(rng, 0.2, 0.5);
    let mut planned = Vec::with_capacity(labels.len());
    let mut spans = Vec::new();
    for (k, label) in labels.into_iter().enumerate() {
        let duration = uniform(rng, cfg.duration_min, cfg.duration_max);
        let (start, end) = (t, t + duration);
        let speaker = rng.random_range(0..2usize);
        let glance = (rng.random_bool(cfg.glance_probability) && duration > cfg.glance_duration).then(|| {
            let g0 = uniform(rng, start, end - cfg.glance_duration);
            (g0, g0 + cfg.glance_duration, uniform(rng, -FRAC_PI_2, FRAC_PI_2))
        });
        let group_side = if rng.random_bool(0.5) { -1.0 } else { 1.0 };
        let group_phase = rng.random_range(0..2usize);
        let uid = format!("u{k:03}");
        let speaker_id = format!("p{speaker}");
        let split = duration > 0.6 && rng.random_bool(cfg.split_probability);
        if split {
            let cut = uniform(rng, start + 0.2, end - 0.3);
            let pause = uniform(rng, 0.02, 0.07);
            spans.push(SpeechSpan { utterance_id: uid.clone(), speaker_id: speaker_id.clone(), start, end: cut, label });
            spans.push(SpeechSpan { utterance_id: uid.clone(), speaker_id, start: cut + pause, end, label });
        } else {
            spans.push(SpeechSpan { utterance_id: uid.clone(), speaker_id, start, end, label });
        }
        planned.push(Planned { id: uid, speaker, label, start, end, glance, group_side, group_phase });
        t = end + uniform(rng, cfg.gap_min, cfg.gap_max);
    }
    (planned, spans)
}

/// Yaw the speaker aims at before noise, and whether a glance overrides it.
fn intended_yaw(u: &Planned, t: f64) -> (f64, bool) {
    if let Some((g0, g1, target)) = u.glance {
        if (g0..=g1).contains(&t) {
            return (target, true);
        }
    }
    let yaw = match u.label {
        AddresseeLabel::Group => {
            let phase = (((t - u.start) / 0.4).floor() as usize + u.group_phase) % 2;
            if phase == 0 {
                0.0
            } else {
                u.group_side * PI / 3.0
            }
        }
        label => canonical_yaw(label).unwrap_or(0.0),
    };
    (yaw, false)
}

fn keypoint(x_px: f64, y_px: f64, visible: bool, cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Keypoint {
    let jitter = Normal::new(0.0, 0.3).unwrap();
    let x = x_px + jitter.sample(rng);
    let y = y_px + jitter.sample(rng);
    let inside = x >= 0.0 && y >= 0.0 && x < cfg.image_width as f64 && y < cfg.image_height as f64;
    if !(visible && inside) {
        return Keypoint::MISSING;
    }
    Keypoint {
        x: to_normalized(x, cfg.image_width),
        y: to_normalized(y, cfg.image_height),
        confidence: uniform(rng, 0.6, 1.0),
    }
}

/// Horizontal position and depth of a head landmark at azimuth `a` on a sphere of radius `r`.
fn on_head(cx: f64, r: f64, a: f64) -> (f64, f64) {
    (cx + r * a.sin(), a.cos())
}

fn eye_azimuths(yaw: f64) -> [f64; 2] {
    let spread = 35f64.to_radians();
    // the person's right eye sits on the image-left side
    [yaw - spread, yaw + spread]
}

const EYE_VISIBLE_DEPTH: f64 = -0.1;

fn skeleton(s: &PersonState, cfg: &ScenarioConfig, speaking: bool, rng: &mut ChaCha8Rng) -> [Keypoint; KEYPOINTS] {
    let r = cfg.face_radius;
    let mut k = [Keypoint::MISSING; KEYPOINTS];
    let (nose_x, _) = on_head(s.cx, r, s.yaw);
    k[0] = keypoint(nose_x, s.cy + 0.15 * r, true, cfg, rng);
    let [re, le] = eye_azimuths(s.yaw);
    for (slot, a) in [(14, re), (15, le)] {
        let (x, depth) = on_head(s.cx, 0.9 * r, a);
        k[slot] = keypoint(x, s.cy - 0.15 * r, depth > EYE_VISIBLE_DEPTH, cfg, rng);
    }
    for (slot, a) in [(16, s.yaw - FRAC_PI_2), (17, s.yaw + FRAC_PI_2)] {
        let (x, depth) = on_head(s.cx, r, a);
        k[slot] = keypoint(x, s.cy, depth > -0.3, cfg, rng);
    }

    let neck = (s.cx, s.cy + 1.6 * r);
    k[1] = keypoint(neck.0, neck.1, true, cfg, rng);
    let gesture = if speaking { 0.5 * r * s.body_yaw.sin() } else { 0.0 };
    for (side, [sh, el, wr, hip, knee, ankle]) in [(-1.0, [2, 3, 4, 8, 9, 10]), (1.0, [5, 6, 7, 11, 12, 13])] {
        let a = s.body_yaw + side * FRAC_PI_2;
        let shoulder = (neck.0 + 1.7 * r * a.sin(), neck.1 + 0.3 * r);
        let elbow = (shoulder.0 + side * 0.3 * r, shoulder.1 + 1.6 * r);
        let wrist = (elbow.0 + gesture, elbow.1 + 1.4 * r);
        let hip_pt = (neck.0 + r * a.sin(), neck.1 + 3.4 * r);
        let knee_pt = (hip_pt.0, hip_pt.1 + 2.6 * r);
        let ankle_pt = (knee_pt.0, knee_pt.1 + 2.6 * r);
        for (slot, (x, y)) in [(sh, shoulder), (el, elbow), (wr, wrist), (hip, hip_pt), (knee, knee_pt), (ankle, ankle_pt)] {
            k[slot] = keypoint(x, y, true, cfg, rng);
        }
    }
    k
}

fn draw_person(canvas: &mut Canvas, s: &PersonState, p: &Person, r: f64) {
    let neck_y = s.cy + 1.6 * r;
    let shoulders = [-1.0, 1.0].map(|side| (s.cx + 1.7 * r * (s.body_yaw + side * FRAC_PI_2).sin(), neck_y + 0.3 * r));
    let hips = [-1.0, 1.0].map(|side| (s.cx + r * (s.body_yaw + side * FRAC_PI_2).sin(), neck_y + 3.4 * r));
    canvas.fill_convex(&[shoulders[0], shoulders[1], hips[1], hips[0]], p.shirt);
    canvas.fill_disc(s.cx, s.cy, r, p.skin);
    for a in eye_azimuths(s.yaw) {
        let (x, depth) = on_head(s.cx, 0.9 * r, a);
        if depth > EYE_VISIBLE_DEPTH {
            canvas.fill_disc(x, s.cy - 0.15 * r, 0.18 * r, [25.0, 25.0, 35.0]);
        }
    }
}

fn background(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (w, h) = (cfg.image_width, cfg.image_height);
    let base = uniform(rng, 105.0, 145.0);
    let tint = [uniform(rng, -10.0, 10.0), uniform(rng, -10.0, 10.0), uniform(rng, -10.0, 10.0)];
    let slope = uniform(rng, -15.0, 15.0);
    let texture = Normal::new(0.0, 6.0).unwrap();
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        let g = base + slope * (y as f64 / h as f64 - 0.5);
        for _ in 0..w {
            for t in tint {
                data.push(g + t + texture.sample(rng));
            }
        }
    }
    data
}

/// Generates interaction number `index` of the scenario. Interactions use
/// independent random streams, so each can be produced on its own.
pub fn generate_interaction(cfg: &ScenarioConfig, index: usize) -> Result<SyntheticInteraction> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64 + 1);
    let id = interaction_id(index);
    let r = cfg.face_radius;

    let persons: Vec<Person> = [-0.45, 0.45]
        .iter()
        .map(|&x| Person {
            base_x: x + uniform(&mut rng, -0.05, 0.05),
            head_y: -0.45 + uniform(&mut rng, -0.05, 0.05),
            skin: [uniform(&mut rng, 175.0, 230.0), uniform(&mut rng, 135.0, 185.0), uniform(&mut rng, 115.0, 160.0)],
            shirt: [uniform(&mut rng, 40.0, 220.0), uniform(&mut rng, 40.0, 220.0), uniform(&mut rng, 40.0, 220.0)],
            sway_freq: uniform(&mut rng, 0.1, 0.4),
            sway_phase: uniform(&mut rng, 0.0, 2.0 * PI),
        })
        .collect();
    let bg = background(cfg, &mut rng);
    let (planned, spans) = plan(cfg, &mut rng);
    let t_end = planned.last().map_or(1.0, |u| u.end) + 0.3;

    let yaw_noise = Normal::new(0.0, cfg.yaw_noise).unwrap();
    let listener_noise = Normal::new(0.0, 0.1).unwrap();
    let head_jitter = Normal::new(0.0, 0.25).unwrap();
    let mut body_yaw = [0.0f64; 2];
    let mut frames = Vec::new();
    let mut truth = Vec::new();
    let mut t = 0.0f64;
    let mut index_counter = 0u64;
    let mut cursor = 0usize;
    while t <= t_end {
        while cursor < planned.len() && planned[cursor].end < t {
            cursor += 1;
        }
        let active = planned.get(cursor).filter(|u| u.start <= t && t <= u.end);
        let mut states = Vec::with_capacity(2);
        let mut frame_truth = None;
        for (p, person) in persons.iter().enumerate() {
            // listeners and idle people look at the other human
            let toward_other = if p == 0 { PI / 3.0 } else { -PI / 3.0 };
            let yaw = match active {
                Some(u) if u.speaker == p => {
                    let (clean, in_glance) = intended_yaw(u, t);
                    let yaw = clean + yaw_noise.sample(&mut rng);
                    frame_truth = Some((u, clean, yaw, in_glance));
                    yaw
                }
                _ => toward_other + listener_noise.sample(&mut rng),
            };
            body_yaw[p] += 0.25 * (yaw - body_yaw[p]);
            let sway = 0.015 * (2.0 * PI * person.sway_freq * t + person.sway_phase).sin();
            let cx = crate::corpus::to_pixel(person.base_x + sway, cfg.image_width) + head_jitter.sample(&mut rng);
            let cy = crate::corpus::to_pixel(person.head_y, cfg.image_height) + head_jitter.sample(&mut rng);
            states.push(PersonState { cx, cy, yaw, body_yaw: body_yaw[p] });
        }
        let mut canvas = Canvas::from_background(cfg.image_width, cfg.image_height, &bg);
        for (s, p) in states.iter().zip(&persons) {
            draw_person(&mut canvas, s, p, r);
        }
        let mut poses = Vec::with_capacity(2);
        for (p, s) in states.iter().enumerate() {
            let speaking = active.is_some_and(|u| u.speaker == p);
            let role = if speaking { PersonRole::Speaker } else { PersonRole::Other };
            poses.push(BodyPose { keypoints: skeleton(s, cfg, speaking, &mut rng), role });
        }
        if let Some((u, clean, yaw, in_glance)) = frame_truth {
            let s = &states[u.speaker];
            truth.push(FrameTruth {
                interaction_id: id.clone(),
                frame_index: index_counter,
                utterance_id: u.id.clone(),
                label: u.label,
                clean_yaw: clean,
                yaw,
                head_center: (s.cx, s.cy),
                in_glance,
            });
        }
        frames.push(RawFrame {
            index: index_counter,
            timestamp: t,
            poses,
            image: canvas.finish(cfg.pixel_noise, &mut rng),
        });
        index_counter += 1;
        t += uniform(&mut rng, 1.0 - cfg.fps_jitter, 1.0 + cfg.fps_jitter) / cfg.fps;
    }

    let interaction = Interaction { id, spans, frames };
    interaction.validate()?;
    Ok(SyntheticInteraction { interaction, truth })
}

fn summarize(summary: &mut SynthSummary, s: &SyntheticInteraction) {
    summary.interactions += 1;
    summary.frames += s.interaction.frames.len();
    let mut seen = std::collections::BTreeSet::new();
    for span in &s.interaction.spans {
        if seen.insert(&span.utterance_id) {
            summary.utterances += 1;
            *summary.labels.entry(span.label).or_default() += 1;
        }
    }
}

/// Whole corpus in memory. Meant for small scenarios; see [`generate`].
pub fn generate_corpus(cfg: &ScenarioConfig) -> Result<(Corpus, Vec<FrameTruth>)> {
    let mut interactions = Vec::with_capacity(cfg.interactions);
    let mut truth = Vec::new();
    for i in 0..cfg.interactions {
        let s = generate_interaction(cfg, i)?;
        truth.extend(s.truth);
        interactions.push(s.interaction);
    }
    Ok((Corpus { interactions }, truth))
}

/// Writes the corpus below `out`, one interaction at a time.
pub fn generate(cfg: &ScenarioConfig, out: &Path) -> Result<SynthSummary> {
    cfg.validate()?;
    let mut summary = SynthSummary::default();
    for i in 0..cfg.interactions {
        let s = generate_interaction(cfg, i)?;
        write_interaction(&s.interaction, out)?;
        summarize(&mut summary, &s);
    }
    Ok(summary)
}

/// Radius-normalised horizontal offset of the rendered eye dots from the
/// head centre, measured from the pixels of `image` by darkness weighting.
pub fn measured_eye_offset(image: &crate::corpus::Image, center: (f64, f64), radius: f64) -> Option<f64> {
    let (mut wsum, mut xsum) = (0.0, 0.0);
    let reach = 0.95 * radius;
    let y0 = (center.1 - reach).floor().max(0.0) as usize;
    let y1 = ((center.1 + reach).ceil() as usize).min(image.height);
    let x0 = (center.0 - reach).floor().max(0.0) as usize;
    let x1 = ((center.0 + reach).ceil() as usize).min(image.width);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            if (px - center.0).powi(2) + (py - center.1).powi(2) > reach * reach {
                continue;
            }
            let [r, g, b] = image.rgb(x, y);
            let gray = (r as f64 + g as f64 + b as f64) / 3.0;
            let w = ((110.0 - gray) / 80.0).clamp(0.0, 1.0);
            wsum += w;
            xsum += w * (px - center.0);
        }
    }
    (wsum > 0.0).then(|| xsum / wsum / radius)
}
