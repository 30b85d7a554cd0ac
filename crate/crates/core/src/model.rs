//! Model configuration and the named parameter set shared by the encoder,
//! the recognizer, the trainer and checkpoints.

use afe_autograd::{Scalar, Tape, Tensor, Var};
use indexmap::IndexMap;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{AfeError, Result};
use crate::skeleton::Topology;

/// Which enhancement modules are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AblationFlags {
    /// learnable key-joint scaling and its embeddings
    pub kjfe: bool,
    /// learnable bone-vector scaling and its embeddings
    pub bvfe: bool,
    /// multi-frame attention on the two position images
    pub mfam: bool,
    /// learned per-column temporal embedding
    pub te: bool,
    /// velocity image streams
    pub jvtm: bool,
}

impl AblationFlags {
    pub const FULL: Self = Self {
        kjfe: true,
        bvfe: true,
        mfam: true,
        te: true,
        jvtm: true,
    };

    /// Raw coordinate images through fixed identity-like embeddings.
    pub const RAW: Self = Self {
        kjfe: false,
        bvfe: false,
        mfam: false,
        te: false,
        jvtm: true,
    };

    pub fn streams(&self) -> usize {
        if self.jvtm {
            4
        } else {
            2
        }
    }

    pub fn to_array(self) -> [bool; 5] {
        [self.kjfe, self.bvfe, self.mfam, self.te, self.jvtm]
    }

    pub fn from_array(a: [bool; 5]) -> Self {
        Self {
            kjfe: a[0],
            bvfe: a[1],
            mfam: a[2],
            te: a[3],
            jvtm: a[4],
        }
    }
}

impl Default for AblationFlags {
    fn default() -> Self {
        Self::FULL
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    /// frames per sequence after resampling, also the image width and height
    pub frames: usize,
    pub topology: Topology,
    pub classes: usize,
    pub channels: [usize; 3],
    pub fc_hidden: usize,
    pub head_hidden: usize,
    pub padding: usize,
    pub leaky_slope: f32,
    pub flags: AblationFlags,
}

impl ModelConfig {
    pub fn new(topology: Topology, classes: usize) -> Self {
        Self {
            frames: 64,
            topology,
            classes,
            channels: [32, 64, 128],
            fc_hidden: 256,
            head_hidden: 64,
            padding: 1,
            leaky_slope: 0.01,
            flags: AblationFlags::FULL,
        }
    }

    pub fn joints(&self) -> usize {
        self.topology.joint_count()
    }

    pub fn bones(&self) -> usize {
        self.topology.bone_count()
    }

    /// Spatial extents `[input, conv1, pool1, conv2, pool2, conv3, pool3]`.
    pub fn spatial_trace(&self) -> Result<[usize; 7]> {
        let mut out = [0; 7];
        let mut h = self.frames;
        out[0] = h;
        for stage in 0..3 {
            let padded = h + 2 * self.padding;
            if padded < 3 {
                return Err(AfeError::Config(format!(
                    "stage {} input extent {h} too small for a 3x3 kernel",
                    stage + 1
                )));
            }
            h = (padded - 3) / 2 + 1;
            out[1 + 2 * stage] = h;
            if h % 2 != 0 {
                return Err(AfeError::Config(format!(
                    "stage {} conv output extent {h} is not even for 2x2 pooling (frames={}, padding={})",
                    stage + 1,
                    self.frames,
                    self.padding
                )));
            }
            h /= 2;
            out[2 + 2 * stage] = h;
        }
        Ok(out)
    }

    /// Per-stream flattened feature width `F`.
    pub fn feature_width(&self) -> Result<usize> {
        let h = self.spatial_trace()?[6];
        Ok(self.channels[2] * h * h)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 || self.classes == 0 || self.fc_hidden == 0 || self.head_hidden == 0 {
            return Err(AfeError::Config(
                "frames must be >= 2 and classes, fc_hidden, head_hidden positive".into(),
            ));
        }
        if self.channels.contains(&0) {
            return Err(AfeError::Config(format!("channels must be positive, got {:?}", self.channels)));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(AfeError::Config(format!("leaky slope must be in (0,1), got {}", self.leaky_slope)));
        }
        self.feature_width().map(|_| ())
    }

    /// Shapes of every parameter in canonical order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        self.validate()?;
        let (t, j, h) = (self.frames, self.joints(), self.head_hidden);
        let f = self.flags;
        let mut out: Vec<(String, Vec<usize>)> = Vec::new();
        let mut push = |name: &str, shape: &[usize]| out.push((name.to_string(), shape.to_vec()));
        for (on, prefix) in [(f.kjfe, "kjfe"), (f.bvfe, "bvfe")] {
            if on {
                push(&format!("{prefix}.fc1.weight"), &[h, 3 * t]);
                push(&format!("{prefix}.fc1.bias"), &[h]);
                push(&format!("{prefix}.fc2.weight"), &[1, h]);
                push(&format!("{prefix}.fc2.bias"), &[1]);
            }
        }
        push("emb.kj", &[t, j]);
        push("emb.bv", &[t, j]);
        if f.jvtm {
            push("emb.kjv", &[t, j]);
            push("emb.bvv", &[t, j]);
        }
        if f.mfam {
            push("mfam.fc.weight", &[j, 3 * j]);
            push("mfam.fc.bias", &[j]);
            push("mfam.wq", &[j, j]);
            push("mfam.wk", &[j, j]);
        }
        if f.te {
            for s in &STREAM_NAMES[..f.streams()] {
                push(&format!("te.{s}"), &[t]);
            }
        }
        let c = self.channels;
        for s in 0..f.streams() {
            let mut c_in = 3;
            for (l, &c_out) in c.iter().enumerate() {
                push(&format!("stream{s}.conv{}.weight", l + 1), &[c_out, c_in, 3, 3]);
                push(&format!("stream{s}.conv{}.bias", l + 1), &[c_out]);
                c_in = c_out;
            }
        }
        let width = f.streams() * self.feature_width()?;
        push("cls.fc1.weight", &[self.fc_hidden, width]);
        push("cls.fc1.bias", &[self.fc_hidden]);
        push("cls.fc2.weight", &[self.classes, self.fc_hidden]);
        push("cls.fc2.bias", &[self.classes]);
        Ok(out)
    }

    /// Whether the optimizer updates `name`. Embeddings of a disabled
    /// enhancement module stay at their identity-like initialization.
    pub fn is_trainable(&self, name: &str) -> bool {
        match name {
            "emb.kj" | "emb.kjv" => self.flags.kjfe,
            "emb.bv" | "emb.bvv" => self.flags.bvfe,
            _ => true,
        }
    }
}

/// Stream order: key-joint image, bone image, key-joint velocity, bone velocity.
pub const STREAM_NAMES: [&str; 4] = ["kj", "bv", "kjv", "bvv"];

/// Identity-like `T x J` embedding: row `t` has a one at joint `floor(t J / T)`.
pub fn identity_embedding<S: Scalar>(frames: usize, joints: usize) -> Tensor<S> {
    let mut e = Tensor::zeros(&[frames, joints]);
    for t in 0..frames {
        e.set(&[t, t * joints / frames], S::one());
    }
    e
}

/// Named parameter tensors plus the configuration that shaped them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<S = f32> {
    pub config: ModelConfig,
    tensors: IndexMap<String, Tensor<S>>,
}

impl ModelParams<f32> {
    /// Seeded initialization: Kaiming fan-in normal for conv, classifier and
    /// attention weights, zero biases, near-identity scale heads (weights
    /// uniform in +-0.01, output bias 1), identity-like embeddings and zero
    /// temporal embeddings.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let small = Uniform::new_inclusive(-0.01f32, 0.01);
        let mut tensors = IndexMap::new();
        for (name, shape) in config.param_shapes()? {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = if name.starts_with("emb.") {
                identity_embedding::<f32>(shape[0], shape[1]).into_data()
            } else if name.starts_with("kjfe.") || name.starts_with("bvfe.") {
                if name.ends_with("fc2.bias") {
                    vec![1.0; n]
                } else if name.ends_with("bias") {
                    vec![0.0; n]
                } else {
                    (0..n).map(|_| small.sample(&mut rng)).collect()
                }
            } else if name.ends_with("bias") || name.starts_with("te.") {
                vec![0.0; n]
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
                (0..n).map(|_| normal.sample(&mut rng) as f32).collect()
            };
            tensors.insert(name, Tensor::new(&shape, data)?);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
        })
    }
}

impl<S: Scalar> ModelParams<S> {
    /// Builds a parameter set from tensors, checking names and shapes
    /// against the configuration.
    pub fn from_tensors(config: ModelConfig, mut given: IndexMap<String, Tensor<S>>) -> Result<Self> {
        let mut tensors = IndexMap::new();
        for (name, shape) in config.param_shapes()? {
            let t = given
                .shift_remove(&name)
                .ok_or_else(|| AfeError::Config(format!("missing parameter {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(AfeError::Config(format!(
                    "parameter {name} has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            tensors.insert(name, t);
        }
        if let Some(extra) = given.keys().next() {
            return Err(AfeError::Config(format!("unexpected parameter {extra}")));
        }
        Ok(Self { config, tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<S>> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<S>> {
        self.tensors.get_mut(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar values, frozen ones included.
    pub fn value_count(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            tensors: self.tensors.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
        }
    }

    /// Records every tensor on `tape`. With `train` set, trainable tensors
    /// become gradient-tracking leaves.
    pub fn bind(&self, tape: &mut Tape<S>, train: bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(k, v)| {
                let grad = train && self.config.is_trainable(k);
                (k.clone(), tape.leaf(v.clone(), grad))
            })
            .collect();
        Bound { vars }
    }
}

/// Parameter handles on one tape.
#[derive(Debug, Clone)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    /// Pairs parameter names with already recorded variables.
    pub fn from_vars<'a>(names: impl IntoIterator<Item = &'a str>, vars: &[Var]) -> Self {
        Self {
            vars: names.into_iter().map(str::to_string).zip(vars.iter().copied()).collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| AfeError::Config(format!("parameter {name} is not part of this model")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_trace_reaches_one() {
        let cfg = ModelConfig::new(Topology::ntu25(), 60);
        assert_eq!(cfg.spatial_trace().unwrap(), [64, 32, 16, 8, 4, 2, 1]);
        assert_eq!(cfg.feature_width().unwrap(), 128);
    }

    #[test]
    fn odd_extent_is_config_error() {
        let mut cfg = ModelConfig::new(Topology::humanoid15(), 8);
        cfg.frames = 40;
        assert!(matches!(cfg.validate(), Err(AfeError::Config(_))));
    }

    #[test]
    fn identity_embedding_when_square() {
        assert_eq!(identity_embedding::<f32>(5, 5), Tensor::eye(5));
        let e = identity_embedding::<f32>(64, 15);
        assert_eq!(e.sum(), 64.0);
        assert_eq!(e.get(&[63, 14]), 1.0);
    }

    #[test]
    fn init_is_seeded() {
        let cfg = ModelConfig::new(Topology::humanoid15(), 8);
        let a = ModelParams::init(&cfg, 3).unwrap();
        assert_eq!(a, ModelParams::init(&cfg, 3).unwrap());
        assert_ne!(a, ModelParams::init(&cfg, 4).unwrap());
        assert_eq!(a.get("kjfe.fc2.bias").unwrap().data(), &[1.0]);
        assert!(a.get("te.kj").unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn disabled_modules_drop_parameters() {
        let mut cfg = ModelConfig::new(Topology::humanoid15(), 8);
        cfg.flags = AblationFlags::RAW;
        let p = ModelParams::init(&cfg, 0).unwrap();
        assert!(p.get("kjfe.fc1.weight").is_none());
        assert!(p.get("mfam.wq").is_none());
        assert!(p.get("emb.kj").is_some());
        assert!(!cfg.is_trainable("emb.kj"));
        cfg.flags.jvtm = false;
        let p = ModelParams::init(&cfg, 0).unwrap();
        assert!(p.get("stream2.conv1.weight").is_none());
        assert_eq!(p.get("cls.fc1.weight").unwrap().shape(), &[256, 256]);
    }
}
