//! The CNN+LSTM addressee classifiers.
//!
//! Faces and poses go through separate convolutional streams, each ending in
//! two fully connected layers. The variants differ in where the modalities
//! meet:
//!
//! | tag | architecture | classes |
//! |-----|--------------|---------|
//! | 1a  | per-frame concatenation before one LSTM | 3 |
//! | 1b  | one LSTM per modality, concatenated after | 3 |
//! | 1c  | faces only | 3 |
//! | 1d  | poses only | 3 |
//! | 2   | as 1a | 2 |
//!
//! Parameters are named `face.*` and `pose.*` for the streams, `lstm.*`,
//! `face_lstm.*`, `pose_lstm.*`, `face_branch.*` and `pose_branch.*` for the
//! temporal part and `head.*` for the classifier.

mod checkpoint;
mod exec;
mod profile;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC};
pub use exec::{Branch, TraceRow};
pub use profile::{ModelProfile, FACE_KERNELS, FACE_POOL, POSE_KERNEL, POSE_POOLS};

use crate::corpus::{Sequence, Task, KEYPOINTS, SEQUENCE_FRAMES};
use crate::error::{Error, Result};
use crate::numerics::{Graph, ParamStore, Tensor, Var};
use exec::{Exec, GraphExec, ShapeExec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Architecture {
    Intermediate,
    Late,
    FaceOnly,
    PoseOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    /// 1a
    IntermediateFusion,
    /// 1b
    LateFusion,
    /// 1c
    FaceOnly,
    /// 1d
    PoseOnly,
    /// 2: intermediate fusion, robot addressed or not.
    Binary,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::IntermediateFusion,
        Experiment::LateFusion,
        Experiment::FaceOnly,
        Experiment::PoseOnly,
        Experiment::Binary,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Experiment::IntermediateFusion => "1a",
            Experiment::LateFusion => "1b",
            Experiment::FaceOnly => "1c",
            Experiment::PoseOnly => "1d",
            Experiment::Binary => "2",
        }
    }

    pub fn architecture(self) -> Architecture {
        match self {
            Experiment::IntermediateFusion | Experiment::Binary => Architecture::Intermediate,
            Experiment::LateFusion => Architecture::Late,
            Experiment::FaceOnly => Architecture::FaceOnly,
            Experiment::PoseOnly => Architecture::PoseOnly,
        }
    }

    pub fn task(self) -> Task {
        match self {
            Experiment::Binary => Task::Binary,
            _ => Task::ThreeClass,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.tag() == s)
            .ok_or_else(|| Error::config(format!("unknown experiment {s:?} (expected 1a, 1b, 1c, 1d or 2)")))
    }
}

/// Name, shape and uniform init bound of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init_bound: f64,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

#[derive(Default)]
struct Specs(Vec<ParamSpec>);

impl Specs {
    fn push(&mut self, name: String, shape: Vec<usize>, fan_in: usize) {
        self.0.push(ParamSpec { name, shape, init_bound: 1.0 / (fan_in as f64).sqrt() });
    }

    fn conv(&mut self, layer: &str, cin: usize, cout: usize, k: (usize, usize)) {
        let fan_in = cin * k.0 * k.1;
        self.push(format!("{layer}.weight"), vec![cout, cin, k.0, k.1], fan_in);
        self.push(format!("{layer}.bias"), vec![cout], fan_in);
    }

    fn linear(&mut self, layer: &str, din: usize, dout: usize) {
        self.push(format!("{layer}.weight"), vec![dout, din], din);
        self.push(format!("{layer}.bias"), vec![dout], din);
    }

    fn lstm(&mut self, layer: &str, din: usize, h: usize) {
        self.push(format!("{layer}.w_ih"), vec![4 * h, din], h);
        self.push(format!("{layer}.w_hh"), vec![4 * h, h], h);
        self.push(format!("{layer}.b_ih"), vec![4 * h], h);
        self.push(format!("{layer}.b_hh"), vec![4 * h], h);
    }

    fn face_stream(&mut self, p: &ModelProfile) -> Result<()> {
        let c = p.face_channels;
        for i in 0..4 {
            self.conv(&format!("face.conv{}", i + 1), if i == 0 { 3 } else { c[i - 1] }, c[i], FACE_KERNELS[i]);
        }
        self.linear("face.fc1", p.face_flatten()?, p.face_hidden);
        self.linear("face.fc2", p.face_hidden, p.face_embedding);
        Ok(())
    }

    fn pose_stream(&mut self, p: &ModelProfile) -> Result<()> {
        let c = p.pose_channels;
        for i in 0..4 {
            self.conv(&format!("pose.conv{}", i + 1), if i == 0 { 1 } else { c[i - 1] }, c[i], POSE_KERNEL);
        }
        self.linear("pose.fc1", p.pose_flatten()?, p.pose_hidden);
        self.linear("pose.fc2", p.pose_hidden, p.pose_embedding);
        Ok(())
    }

    fn head(&mut self, p: &ModelProfile, din: usize) {
        self.linear("head.fc1", din, p.head_hidden);
        self.linear("head.fc2", p.head_hidden, p.class_count);
    }
}

/// Parameter tensors of `arch` under `profile`, in initialisation order.
pub fn param_specs(arch: Architecture, profile: &ModelProfile) -> Result<Vec<ParamSpec>> {
    profile.validate()?;
    let p = profile;
    let mut s = Specs::default();
    match arch {
        Architecture::Intermediate => {
            s.face_stream(p)?;
            s.pose_stream(p)?;
            s.lstm("lstm", p.fused_width(), p.lstm_fused);
            s.head(p, p.lstm_fused);
        }
        Architecture::Late => {
            s.face_stream(p)?;
            s.pose_stream(p)?;
            s.lstm("face_lstm", p.face_embedding, p.lstm_face);
            s.lstm("pose_lstm", p.pose_embedding, p.lstm_pose);
            s.linear("face_branch.fc", p.lstm_face, p.branch_width);
            s.linear("pose_branch.fc", p.lstm_pose, p.branch_width);
            s.head(p, 2 * p.branch_width);
        }
        Architecture::FaceOnly => {
            s.face_stream(p)?;
            s.lstm("face_lstm", p.face_embedding, p.lstm_face);
            s.head(p, p.lstm_face);
        }
        Architecture::PoseOnly => {
            s.pose_stream(p)?;
            s.lstm("pose_lstm", p.pose_embedding, p.lstm_pose);
            s.head(p, p.lstm_pose);
        }
    }
    Ok(s.0)
}

/// Profile with the class count `experiment` predicts.
fn profile_for(experiment: Experiment, profile: &ModelProfile) -> ModelProfile {
    ModelProfile { class_count: experiment.task().class_count(), ..profile.clone() }
}

/// Trainable scalars of `experiment` under `profile`, computed without allocating them.
pub fn count_parameters(experiment: Experiment, profile: &ModelProfile) -> Result<usize> {
    let specs = param_specs(experiment.architecture(), &profile_for(experiment, profile))?;
    Ok(specs.iter().map(ParamSpec::numel).sum())
}

fn conv<E: Exec>(e: &mut E, branch: Branch, layer: &str, x: E::V, activate: bool) -> Result<E::V> {
    let mut y = e.conv2d(x, layer)?;
    if activate {
        y = e.leaky_relu(y);
    }
    e.note(TraceRow { branch, layer: if activate { "Conv*" } else { "Conv" }, input: e.shape(x), output: e.shape(y) });
    Ok(y)
}

fn pool<E: Exec>(e: &mut E, branch: Branch, x: E::V, k: (usize, usize)) -> Result<E::V> {
    let y = e.maxpool2d(x, k, k)?;
    e.note(TraceRow { branch, layer: "MPool", input: e.shape(x), output: e.shape(y) });
    Ok(y)
}

fn fc<E: Exec>(e: &mut E, branch: Branch, layer: &str, x: E::V, activate: bool) -> Result<E::V> {
    let mut y = e.linear(x, layer)?;
    if activate {
        y = e.leaky_relu(y);
    }
    e.note(TraceRow { branch, layer: if activate { "FC*" } else { "FC" }, input: e.shape(x), output: e.shape(y) });
    Ok(y)
}

fn flatten<E: Exec>(e: &mut E, branch: Branch, x: E::V) -> Result<E::V> {
    let s = e.shape(x);
    let y = e.reshape(x, &[s[0], s[1..].iter().product()])?;
    e.note(TraceRow { branch, layer: "Flatten", input: s, output: e.shape(y) });
    Ok(y)
}

/// `[F, 3, R, R]` faces to `[F, face_embedding]`.
fn face_stream<E: Exec>(e: &mut E, x: E::V) -> Result<E::V> {
    let b = Branch::Face;
    let x = conv(e, b, "face.conv1", x, false)?;
    let x = conv(e, b, "face.conv2", x, true)?;
    let x = pool(e, b, x, FACE_POOL)?;
    let x = conv(e, b, "face.conv3", x, false)?;
    let x = conv(e, b, "face.conv4", x, true)?;
    let x = pool(e, b, x, FACE_POOL)?;
    let x = flatten(e, b, x)?;
    let x = fc(e, b, "face.fc1", x, true)?;
    fc(e, b, "face.fc2", x, false)
}

/// `[F, 1, 18, 3]` poses to `[F, pose_embedding]`.
fn pose_stream<E: Exec>(e: &mut E, x: E::V) -> Result<E::V> {
    let b = Branch::Pose;
    let x = conv(e, b, "pose.conv1", x, false)?;
    let x = conv(e, b, "pose.conv2", x, true)?;
    let x = pool(e, b, x, POSE_POOLS[0])?;
    let x = conv(e, b, "pose.conv3", x, false)?;
    let x = conv(e, b, "pose.conv4", x, true)?;
    let x = pool(e, b, x, POSE_POOLS[1])?;
    let x = flatten(e, b, x)?;
    let x = fc(e, b, "pose.fc1", x, true)?;
    fc(e, b, "pose.fc2", x, false)
}

/// `[B*T, D]` frame embeddings to `[B, T, D]`, then the LSTM's last hidden state.
fn temporal<E: Exec>(e: &mut E, branch: Branch, layer: &str, x: E::V) -> Result<E::V> {
    let s = e.shape(x);
    let seq = e.reshape(x, &[s[0] / SEQUENCE_FRAMES, SEQUENCE_FRAMES, s[1]])?;
    let h = e.lstm(seq, layer)?;
    e.note(TraceRow { branch, layer: "LSTM", input: e.shape(seq), output: e.shape(h) });
    Ok(h)
}

fn head<E: Exec>(e: &mut E, x: E::V) -> Result<E::V> {
    let x = fc(e, Branch::Head, "head.fc1", x, true)?;
    let x = fc(e, Branch::Head, "head.fc2", x, false)?;
    let y = e.log_softmax(x)?;
    e.note(TraceRow { branch: Branch::Head, layer: "LSoftm", input: e.shape(x), output: e.shape(y) });
    Ok(y)
}

fn forward_intermediate<E: Exec>(e: &mut E, p: &ModelProfile, faces: E::V, poses: E::V) -> Result<E::V> {
    let f = face_stream(e, faces)?;
    let q = pose_stream(e, poses)?;
    let r = e.repeat(q, p.pose_repeat, 1)?;
    e.note(TraceRow { branch: Branch::Pose, layer: "Repeat", input: e.shape(q), output: e.shape(r) });
    let fused = e.concat(&[f, r], 1)?;
    e.note(TraceRow { branch: Branch::Head, layer: "Concat", input: e.shape(f), output: e.shape(fused) });
    let h = temporal(e, Branch::Head, "lstm", fused)?;
    head(e, h)
}

fn forward_late<E: Exec>(e: &mut E, faces: E::V, poses: E::V) -> Result<E::V> {
    let f = face_stream(e, faces)?;
    let q = pose_stream(e, poses)?;
    let hf = temporal(e, Branch::Face, "face_lstm", f)?;
    let hq = temporal(e, Branch::Pose, "pose_lstm", q)?;
    let bf = fc(e, Branch::Face, "face_branch.fc", hf, false)?;
    let bq = fc(e, Branch::Pose, "pose_branch.fc", hq, false)?;
    let fused = e.concat(&[bf, bq], 1)?;
    e.note(TraceRow { branch: Branch::Head, layer: "Concat", input: e.shape(bf), output: e.shape(fused) });
    head(e, fused)
}

fn forward_face_only<E: Exec>(e: &mut E, faces: E::V) -> Result<E::V> {
    let f = face_stream(e, faces)?;
    let h = temporal(e, Branch::Head, "face_lstm", f)?;
    head(e, h)
}

fn forward_pose_only<E: Exec>(e: &mut E, poses: E::V) -> Result<E::V> {
    let q = pose_stream(e, poses)?;
    let h = temporal(e, Branch::Head, "pose_lstm", q)?;
    head(e, h)
}

fn forward<E: Exec>(e: &mut E, arch: Architecture, p: &ModelProfile, faces: E::V, poses: E::V) -> Result<E::V> {
    for (x, what) in [(faces, "faces"), (poses, "poses")] {
        let n = e.shape(x)[0];
        if n == 0 || n % SEQUENCE_FRAMES != 0 {
            return Err(Error::shape(format!("{n} {what} do not form whole {SEQUENCE_FRAMES}-frame sequences")));
        }
    }
    match arch {
        Architecture::Intermediate => forward_intermediate(e, p, faces, poses),
        Architecture::Late => forward_late(e, faces, poses),
        Architecture::FaceOnly => forward_face_only(e, faces),
        Architecture::PoseOnly => forward_pose_only(e, poses),
    }
}

/// Activation shapes of every layer for a batch of `sequences` sequences.
pub fn shape_trace(experiment: Experiment, profile: &ModelProfile, sequences: usize) -> Result<Vec<TraceRow>> {
    let p = profile_for(experiment, profile);
    let specs = param_specs(experiment.architecture(), &p)?;
    let mut e = ShapeExec::new(specs.into_iter().map(|s| (s.name, s.shape)));
    let frames = sequences * SEQUENCE_FRAMES;
    let faces = e.input(vec![frames, 3, p.face_resolution, p.face_resolution]);
    let poses = e.input(vec![frames, 1, KEYPOINTS, 3]);
    forward(&mut e, experiment.architecture(), &p, faces, poses)?;
    Ok(e.trace)
}

/// Model inputs for `B` sequences. Frames are sequence-major: rows
/// `10 b .. 10 b + 10` hold sequence `b` in time order.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    /// `[B*10, 3, R, R]`, intensities in `[0, 1]`.
    pub faces: Tensor,
    /// `[B*10, 1, 18, 3]`, rows of (x, y, confidence).
    pub poses: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(sequences: &[&Sequence], task: Task, resolution: usize) -> Result<Batch> {
        if sequences.is_empty() {
            return Err(Error::validation("empty batch"));
        }
        let frames = sequences.len() * SEQUENCE_FRAMES;
        let plane = resolution * resolution;
        let mut faces = Vec::with_capacity(frames * 3 * plane);
        let mut poses = Vec::with_capacity(frames * KEYPOINTS * 3);
        let mut labels = Vec::with_capacity(sequences.len());
        for s in sequences {
            if s.frames.len() != SEQUENCE_FRAMES {
                return Err(Error::validation(format!("sequence {} has {} frames", s.id, s.frames.len())));
            }
            let class = task
                .class_of(s.label)
                .ok_or_else(|| Error::validation(format!("sequence {} has label {}, outside the task", s.id, s.label)))?;
            labels.push(class);
            for f in &s.frames {
                if f.face.resolution != resolution {
                    return Err(Error::shape(format!(
                        "sequence {} has {}px faces, the model expects {resolution}px",
                        s.id, f.face.resolution
                    )));
                }
                // HWC bytes to CHW intensities
                for c in 0..3 {
                    faces.extend(f.face.pixels[c..].iter().step_by(3).map(|&v| v as f64 / 255.0));
                }
                poses.extend_from_slice(&f.pose.to_array());
            }
        }
        Ok(Batch {
            faces: Tensor::new(vec![frames, 3, resolution, resolution], faces)?,
            poses: Tensor::new(vec![frames, 1, KEYPOINTS, 3], poses)?,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// A variant together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub experiment: Experiment,
    pub profile: ModelProfile,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with every tensor drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new(experiment: Experiment, profile: &ModelProfile, seed: u64) -> Result<Model> {
        let profile = profile_for(experiment, profile);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for s in param_specs(experiment.architecture(), &profile)? {
            params.push(s.name, Tensor::uniform(&s.shape, s.init_bound, &mut rng));
        }
        Ok(Model { experiment, profile, params })
    }

    pub fn parameter_count(&self) -> usize {
        self.params.numel()
    }

    pub fn class_count(&self) -> usize {
        self.profile.class_count
    }

    /// Log-probabilities `[B, classes]` with parameters bound to `params`
    /// (as returned by [`ParamStore::bind`]).
    pub fn forward(&self, g: &mut Graph, params: &[Var], faces: Var, poses: Var) -> Result<Var> {
        if params.len() != self.params.len() {
            return Err(Error::shape(format!("{} parameter handles for {} parameters", params.len(), self.params.len())));
        }
        let names: Vec<String> = self.params.iter().map(|p| p.name.clone()).collect();
        let mut e = GraphExec {
            params: names.iter().map(String::as_str).zip(params.iter().copied()).collect::<HashMap<_, _>>(),
            g,
            slope: self.profile.leaky_slope,
        };
        forward(&mut e, self.experiment.architecture(), &self.profile, faces, poses)
    }

    /// Log-probabilities for `batch`, without gradients.
    pub fn log_probs(&self, batch: &Batch) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let faces = g.constant(batch.faces.clone());
        let poses = g.constant(batch.poses.clone());
        let out = self.forward(&mut g, &vars, faces, poses)?;
        Ok(g.value(out).clone())
    }

    /// Log-probability rows for `sequences`, evaluated `batch_size` at a time.
    pub fn predict(&self, sequences: &[&Sequence], batch_size: usize) -> Result<Vec<Vec<f64>>> {
        let task = self.experiment.task();
        let mut out = Vec::with_capacity(sequences.len());
        for chunk in sequences.chunks(batch_size.max(1)) {
            let lp = self.log_probs(&Batch::new(chunk, task, self.profile.face_resolution)?)?;
            out.extend(lp.data().chunks(self.class_count()).map(<[f64]>::to_vec));
        }
        Ok(out)
    }
}
