use crate::config::{format_list, parse_list, KeyValues};
use crate::error::{Error, Result};
use crate::numerics::{conv2d_output_shape, maxpool2d_output_shape};

/// Layer widths of every model variant. Kernel sizes and strides are fixed;
/// everything that depends on the input resolution is derived.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelProfile {
    pub name: String,
    pub face_resolution: usize,
    /// Output channels of the four face convolutions.
    pub face_channels: [usize; 4],
    /// Width of the face FC* layer.
    pub face_hidden: usize,
    pub face_embedding: usize,
    pub pose_channels: [usize; 4],
    pub pose_hidden: usize,
    pub pose_embedding: usize,
    /// How often the pose embedding is repeated before intermediate fusion.
    pub pose_repeat: usize,
    /// LSTM width of the intermediate-fusion model.
    pub lstm_fused: usize,
    /// LSTM width over face embeddings (late fusion, face-only).
    pub lstm_face: usize,
    /// LSTM width over pose embeddings (late fusion, pose-only).
    pub lstm_pose: usize,
    /// Per-branch FC width after the LSTMs of the late-fusion model.
    pub branch_width: usize,
    pub head_hidden: usize,
    pub class_count: usize,
    pub leaky_slope: f64,
}

pub const FACE_KERNELS: [(usize, usize); 4] = [(7, 7), (5, 5), (5, 5), (3, 3)];
pub const POSE_KERNEL: (usize, usize) = (3, 1);
pub const FACE_POOL: (usize, usize) = (2, 2);
pub const POSE_POOLS: [(usize, usize); 2] = [(2, 1), (2, 2)];

impl ModelProfile {
    /// Full-size network: 160 px faces, an 18496-wide face flatten.
    pub fn paper() -> Self {
        ModelProfile {
            name: "paper".into(),
            face_resolution: 160,
            face_channels: [6, 8, 12, 16],
            face_hidden: 4624,
            face_embedding: 578,
            pose_channels: [16, 16, 32, 32],
            pose_hidden: 24,
            pose_embedding: 20,
            pose_repeat: 29,
            lstm_fused: 256,
            lstm_face: 512,
            lstm_pose: 256,
            branch_width: 128,
            head_hidden: 128,
            class_count: 3,
            leaky_slope: 0.01,
        }
    }

    /// Same topology on 32 px faces (flatten 64), small enough to train on a CPU.
    pub fn desk() -> Self {
        ModelProfile { name: "desk".into(), face_resolution: 32, face_hidden: 16, ..Self::paper() }
    }

    /// A few parameters per layer, for finite-difference checks of whole models.
    /// 26 px is the smallest face that survives both convolution blocks.
    pub fn tiny() -> Self {
        ModelProfile {
            name: "tiny".into(),
            face_resolution: 26,
            face_channels: [2, 2, 3, 3],
            face_hidden: 4,
            face_embedding: 6,
            pose_channels: [2, 2, 3, 3],
            pose_hidden: 4,
            pose_embedding: 2,
            pose_repeat: 3,
            lstm_fused: 4,
            lstm_face: 5,
            lstm_pose: 3,
            branch_width: 4,
            head_hidden: 4,
            class_count: 3,
            leaky_slope: 0.01,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::config(format!("unknown profile {other:?} (expected paper, desk or tiny)"))),
        }
    }

    /// `[C, H, W]` after each face layer up to the second pool.
    pub fn face_chain(&self) -> Result<Vec<[usize; 3]>> {
        let r = self.face_resolution;
        let c = self.face_channels;
        let mut shape = vec![1, 3, r, r];
        let mut out = Vec::new();
        let conv = |shape: &mut Vec<usize>, cin: usize, cout: usize, k: (usize, usize)| -> Result<()> {
            *shape = conv2d_output_shape(shape, &[cout, cin, k.0, k.1], (1, 1))?;
            Ok(())
        };
        for (i, (&cout, &k)) in c.iter().zip(&FACE_KERNELS).enumerate() {
            let cin = if i == 0 { 3 } else { c[i - 1] };
            conv(&mut shape, cin, cout, k)?;
            out.push([shape[1], shape[2], shape[3]]);
            if i % 2 == 1 {
                shape = maxpool2d_output_shape(&shape, FACE_POOL, FACE_POOL)?;
                out.push([shape[1], shape[2], shape[3]]);
            }
        }
        Ok(out)
    }

    pub fn face_flatten(&self) -> Result<usize> {
        let last = *self.face_chain()?.last().expect("non-empty chain");
        Ok(last.iter().product())
    }

    pub fn pose_flatten(&self) -> Result<usize> {
        let c = self.pose_channels;
        let mut shape = vec![1, 1, 18, 3];
        for (i, &cout) in c.iter().enumerate() {
            let cin = if i == 0 { 1 } else { c[i - 1] };
            shape = conv2d_output_shape(&shape, &[cout, cin, POSE_KERNEL.0, POSE_KERNEL.1], (1, 1))?;
            if i % 2 == 1 {
                let p = POSE_POOLS[i / 2];
                shape = maxpool2d_output_shape(&shape, p, p)?;
            }
        }
        Ok(shape[1..].iter().product())
    }

    /// Width of one fused frame in the intermediate model.
    pub fn fused_width(&self) -> usize {
        self.face_embedding + self.pose_repeat * self.pose_embedding
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [
            self.face_hidden,
            self.face_embedding,
            self.pose_hidden,
            self.pose_embedding,
            self.pose_repeat,
            self.lstm_fused,
            self.lstm_face,
            self.lstm_pose,
            self.branch_width,
            self.head_hidden,
        ];
        if widths.contains(&0) || self.face_channels.contains(&0) || self.pose_channels.contains(&0) {
            return Err(Error::config(format!("profile {}: every layer width must be positive", self.name)));
        }
        if !(2..=3).contains(&self.class_count) {
            return Err(Error::config(format!("class_count must be 2 or 3, got {}", self.class_count)));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::config(format!("leaky_slope must lie in (0, 1), got {}", self.leaky_slope)));
        }
        self.face_flatten()
            .map_err(|e| Error::config(format!("face resolution {} is too small: {e}", self.face_resolution)))?;
        self.pose_flatten()?;
        // the repeated pose embedding should weigh about as much as the face one
        let repeated = self.pose_repeat * self.pose_embedding;
        if repeated.abs_diff(self.face_embedding) > self.pose_embedding {
            return Err(Error::config(format!(
                "pose embedding repeated {} times gives {repeated} values against {} face values",
                self.pose_repeat, self.face_embedding
            )));
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 16] = [
        "profile",
        "face_resolution",
        "face_channels",
        "face_hidden",
        "face_embedding",
        "pose_channels",
        "pose_hidden",
        "pose_embedding",
        "pose_repeat",
        "lstm_fused",
        "lstm_face",
        "lstm_pose",
        "branch_width",
        "head_hidden",
        "class_count",
        "leaky_slope",
    ];

    /// Overrides fields present in `kv`. A `profile` key must match [`name`](Self::name);
    /// use [`from_key_values`](Self::from_key_values) to pick the base profile.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        let channels = |key: &str, slot: &mut [usize; 4]| -> Result<()> {
            if let Some(text) = kv.get(key) {
                let v: Vec<usize> = parse_list(key, text)?;
                *slot = v.try_into().map_err(|_| Error::config(format!("`{key}` needs exactly 4 widths")))?;
            }
            Ok(())
        };
        kv.apply("face_resolution", &mut self.face_resolution)?;
        channels("face_channels", &mut self.face_channels)?;
        kv.apply("face_hidden", &mut self.face_hidden)?;
        kv.apply("face_embedding", &mut self.face_embedding)?;
        channels("pose_channels", &mut self.pose_channels)?;
        kv.apply("pose_hidden", &mut self.pose_hidden)?;
        kv.apply("pose_embedding", &mut self.pose_embedding)?;
        kv.apply("pose_repeat", &mut self.pose_repeat)?;
        kv.apply("lstm_fused", &mut self.lstm_fused)?;
        kv.apply("lstm_face", &mut self.lstm_face)?;
        kv.apply("lstm_pose", &mut self.lstm_pose)?;
        kv.apply("branch_width", &mut self.branch_width)?;
        kv.apply("head_hidden", &mut self.head_hidden)?;
        kv.apply("class_count", &mut self.class_count)?;
        kv.apply("leaky_slope", &mut self.leaky_slope)?;
        self.validate()
    }

    /// Named base profile (default `paper`) with the remaining keys applied.
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        let mut p = Self::by_name(kv.get("profile").unwrap_or("paper"))?;
        p.apply(kv)?;
        Ok(p)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        kv.set("profile", &self.name);
        kv.set("face_resolution", self.face_resolution);
        kv.set("face_channels", format_list(&self.face_channels));
        kv.set("face_hidden", self.face_hidden);
        kv.set("face_embedding", self.face_embedding);
        kv.set("pose_channels", format_list(&self.pose_channels));
        kv.set("pose_hidden", self.pose_hidden);
        kv.set("pose_embedding", self.pose_embedding);
        kv.set("pose_repeat", self.pose_repeat);
        kv.set("lstm_fused", self.lstm_fused);
        kv.set("lstm_face", self.lstm_face);
        kv.set("lstm_pose", self.lstm_pose);
        kv.set("branch_width", self.branch_width);
        kv.set("head_hidden", self.head_hidden);
        kv.set("class_count", self.class_count);
        kv.set("leaky_slope", self.leaky_slope);
        kv
    }
}
