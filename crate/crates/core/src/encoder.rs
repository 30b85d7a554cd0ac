//! Action feature enhancement: learnable joint and bone scaling, the
//! multi-frame attention map, velocity images and temporal embeddings.
//!
//! Every function records onto a [`Tape`] so the same code serves training,
//! inference and gradient checks. Tensor layouts:
//!
//! * joint image `X~`: `[3, J, T]` (channel, joint, frame)
//! * per-joint trajectories: `[J, 3T]`, frame-major, `x y z` per frame
//! * per-frame poses: `[T, 3J]`, joint-major, `x y z` per joint
//! * enhanced images: `[3, T, T]`

use std::rc::Rc;

use afe_autograd::{Scalar, Tape, Tensor, TreeLink, Var};

use crate::error::{AfeError, Result};
use crate::model::{Bound, ModelConfig, ModelParams, STREAM_NAMES};
use crate::skeleton::{SkeletonSequence, Topology};

/// Constant tensors derived from one preprocessed sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput<S = f32> {
    pub joints_img: Tensor<S>,
    pub joint_feats: Tensor<S>,
    pub bones_img: Tensor<S>,
    pub bone_feats: Tensor<S>,
    pub frame_feats: Tensor<S>,
    /// root joint position per frame, `[3, 1, T]`
    pub root: Tensor<S>,
    pub label: usize,
}

impl<S: Scalar> SampleInput<S> {
    /// `seq` must already be centered and resampled to the model's frame count.
    pub fn from_sequence(seq: &SkeletonSequence, topology: &Topology) -> Result<Self> {
        let (t_len, j_len, b_len) = (seq.frame_count(), topology.joint_count(), topology.bone_count());
        if seq.joint_count() != j_len {
            return Err(AfeError::Config(format!(
                "sequence has {} joints, topology has {j_len}",
                seq.joint_count()
            )));
        }
        let mut joints_img = vec![S::zero(); 3 * j_len * t_len];
        let mut joint_feats = vec![S::zero(); j_len * 3 * t_len];
        let mut bones_img = vec![S::zero(); 3 * b_len * t_len];
        let mut bone_feats = vec![S::zero(); b_len * 3 * t_len];
        let mut frame_feats = vec![S::zero(); t_len * 3 * j_len];
        let mut root = vec![S::zero(); 3 * t_len];
        let cv = |v: f32| S::from_f64(v as f64);
        for (t, frame) in seq.frames().iter().enumerate() {
            for (j, p) in frame.iter().enumerate() {
                for c in 0..3 {
                    joints_img[(c * j_len + j) * t_len + t] = cv(p[c]);
                    joint_feats[j * 3 * t_len + 3 * t + c] = cv(p[c]);
                    frame_feats[t * 3 * j_len + 3 * j + c] = cv(p[c]);
                }
            }
            for (k, v) in topology.bone_vectors(frame).iter().enumerate() {
                for c in 0..3 {
                    bones_img[(c * b_len + k) * t_len + t] = cv(v[c]);
                    bone_feats[k * 3 * t_len + 3 * t + c] = cv(v[c]);
                }
            }
            for c in 0..3 {
                root[c * t_len + t] = cv(frame[topology.root()][c]);
            }
        }
        Ok(Self {
            joints_img: Tensor::new(&[3, j_len, t_len], joints_img)?,
            joint_feats: Tensor::new(&[j_len, 3 * t_len], joint_feats)?,
            bones_img: Tensor::new(&[3, b_len, t_len], bones_img)?,
            bone_feats: Tensor::new(&[b_len, 3 * t_len], bone_feats)?,
            frame_feats: Tensor::new(&[t_len, 3 * j_len], frame_feats)?,
            root: Tensor::new(&[3, 1, t_len], root)?,
            label: seq.action_label,
        })
    }

    pub fn frames(&self) -> usize {
        self.joints_img.shape()[2]
    }

    pub fn joints(&self) -> usize {
        self.joints_img.shape()[1]
    }
}

/// Two-layer scale head parameters on a tape.
#[derive(Debug, Clone, Copy)]
pub struct ScaleHead {
    pub fc1_w: Var,
    pub fc1_b: Var,
    pub fc2_w: Var,
    pub fc2_b: Var,
}

impl ScaleHead {
    pub fn from_bound(params: &Bound, prefix: &str) -> Result<Self> {
        Ok(Self {
            fc1_w: params.var(&format!("{prefix}.fc1.weight"))?,
            fc1_b: params.var(&format!("{prefix}.fc1.bias"))?,
            fc2_w: params.var(&format!("{prefix}.fc2.weight"))?,
            fc2_b: params.var(&format!("{prefix}.fc2.bias"))?,
        })
    }
}

/// Shared FC plus query/key projections of the attention map.
#[derive(Debug, Clone, Copy)]
pub struct AttentionHead {
    pub fc_w: Var,
    pub fc_b: Var,
    pub wq: Var,
    pub wk: Var,
}

impl AttentionHead {
    pub fn from_bound(params: &Bound) -> Result<Self> {
        Ok(Self {
            fc_w: params.var("mfam.fc.weight")?,
            fc_b: params.var("mfam.fc.bias")?,
            wq: params.var("mfam.wq")?,
            wk: params.var("mfam.wk")?,
        })
    }
}

/// One scale per row of `feats` (`[n, 3T]` -> `[1, n, 1]`).
pub fn scale_head<S: Scalar>(tape: &mut Tape<S>, head: &ScaleHead, feats: Var, slope: S) -> Result<Var> {
    let n = tape.shape(feats)[0];
    let h = tape.linear(feats, head.fc1_w, Some(head.fc1_b))?;
    let h = tape.leaky_relu(h, slope)?;
    let w = tape.linear(h, head.fc2_w, Some(head.fc2_b))?;
    Ok(tape.reshape(w, &[1, n, 1])?)
}

/// Returns `(W, M)` with `M = W x X~` broadcast over channels and frames.
pub fn kjfe_scale<S: Scalar>(
    tape: &mut Tape<S>,
    head: &ScaleHead,
    joint_feats: Var,
    joints_img: Var,
    slope: S,
) -> Result<(Var, Var)> {
    let w = scale_head(tape, head, joint_feats, slope)?;
    let m = tape.mul(w, joints_img)?;
    Ok((w, m))
}

/// Scales bone vectors by `V` and walks the tree from the per-frame root
/// position to recover joints. Returns `(V, N)`, `N` shaped `[3, J, T]`.
#[allow(clippy::too_many_arguments)]
pub fn bvfe_scale<S: Scalar>(
    tape: &mut Tape<S>,
    head: &ScaleHead,
    bone_feats: Var,
    bones_img: Var,
    root: Var,
    links: Rc<[TreeLink]>,
    joints: usize,
    slope: S,
) -> Result<(Var, Var)> {
    let v = scale_head(tape, head, bone_feats, slope)?;
    let scaled = tape.mul(v, bones_img)?;
    let n = recover_joints(tape, scaled, root, links, joints)?;
    Ok((v, n))
}

/// Tree prefix sum of `[3, b, T]` bone vectors plus the `[3, 1, T]` root.
pub fn recover_joints<S: Scalar>(
    tape: &mut Tape<S>,
    bones: Var,
    root: Var,
    links: Rc<[TreeLink]>,
    joints: usize,
) -> Result<Var> {
    let rel = tape.tree_sum(bones, links, joints)?;
    Ok(tape.add(rel, root)?)
}

/// `emb [T, J]` times each channel of `x [3, J, T]`.
pub fn embed_to_image<S: Scalar>(tape: &mut Tape<S>, emb: Var, x: Var) -> Result<Var> {
    let (se, sx) = (tape.shape(emb).to_vec(), tape.shape(x).to_vec());
    if se.len() != 2 || sx.len() != 3 || se[1] != sx[1] {
        return Err(afe_autograd::TensorError::Dimension(format!(
            "embedding {se:?} cannot map input {sx:?}"
        ))
        .into());
    }
    Ok(tape.matmul(emb, x)?)
}

/// Row-stochastic `T x T` attention from per-frame poses `[T, 3J]`.
pub fn mfam_map<S: Scalar>(tape: &mut Tape<S>, head: &AttentionHead, frame_feats: Var, slope: S) -> Result<Var> {
    let h = tape.linear(frame_feats, head.fc_w, Some(head.fc_b))?;
    let h = tape.leaky_relu(h, slope)?;
    let q = tape.linear(h, head.wq, None)?;
    let k = tape.linear(h, head.wk, None)?;
    attention_from_qk(tape, q, k)
}

/// `softmax_rows(Q K^T / sqrt(d_k))` with `d_k` the width of `Q`.
pub fn attention_from_qk<S: Scalar>(tape: &mut Tape<S>, q: Var, k: Var) -> Result<Var> {
    let dk = *tape.shape(q).last().unwrap_or(&1);
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let scores = tape.scale(scores, S::from_f64(1.0 / (dk as f64).sqrt()))?;
    Ok(tape.softmax_rows(scores)?)
}

/// `image ⊙ A + image`, `A` shared by all channels.
pub fn apply_attention<S: Scalar>(tape: &mut Tape<S>, image: Var, attention: Var) -> Result<Var> {
    let (si, sa) = (tape.shape(image).to_vec(), tape.shape(attention).to_vec());
    if si.len() != 3 || sa.len() != 2 || si[1..] != sa[..] {
        return Err(afe_autograd::TensorError::Dimension(format!(
            "attention {sa:?} does not match image {si:?}"
        ))
        .into());
    }
    let weighted = tape.mul(image, attention)?;
    Ok(tape.add(weighted, image)?)
}

/// Frame-difference velocity (last column zero) mapped through `emb`.
pub fn jvtm<S: Scalar>(tape: &mut Tape<S>, x: Var, emb: Var, dt: S) -> Result<Var> {
    let v = tape.diff_last(x, dt)?;
    embed_to_image(tape, emb, v)
}

/// Adds `te[j]` to every pixel of column `j`.
pub fn temporal_embed<S: Scalar>(tape: &mut Tape<S>, image: Var, te: Var) -> Result<Var> {
    Ok(tape.add(image, te)?)
}

/// Enhanced images and intermediates of one sample on a tape.
#[derive(Debug, Clone)]
pub struct EncodedVars {
    /// TF-KJEI, TF-BVEI and, with velocity streams, T-KJVI, T-BVVI
    pub images: Vec<Var>,
    pub attention: Option<Var>,
    pub scaled_joints: Var,
    pub scaled_bones: Var,
}

/// Values of [`EncodedVars`] after a forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBundle {
    pub tf_kjei: Tensor<f32>,
    pub tf_bvei: Tensor<f32>,
    pub t_kjvi: Option<Tensor<f32>>,
    pub t_bvvi: Option<Tensor<f32>>,
    pub attention: Option<Tensor<f32>>,
    pub scaled_joints: Tensor<f32>,
    pub scaled_bones: Tensor<f32>,
}

/// Tape-side handles for the constant tensors of a sample.
#[derive(Debug, Clone, Copy)]
pub struct InputVars {
    pub joints_img: Var,
    pub joint_feats: Var,
    pub bones_img: Var,
    pub bone_feats: Var,
    pub frame_feats: Var,
    pub root: Var,
}

impl InputVars {
    pub fn record<S: Scalar>(tape: &mut Tape<S>, input: &SampleInput<S>) -> Self {
        Self {
            joints_img: tape.constant(input.joints_img.clone()),
            joint_feats: tape.constant(input.joint_feats.clone()),
            bones_img: tape.constant(input.bones_img.clone()),
            bone_feats: tape.constant(input.bone_feats.clone()),
            frame_feats: tape.constant(input.frame_feats.clone()),
            root: tape.constant(input.root.clone()),
        }
    }
}

/// Runs the enabled enhancement blocks for one sample.
pub fn encode<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    params: &Bound,
    links: &Rc<[TreeLink]>,
    input: &InputVars,
) -> Result<EncodedVars> {
    let flags = config.flags;
    let slope = S::from_f64(config.leaky_slope as f64);
    let m = if flags.kjfe {
        let head = ScaleHead::from_bound(params, "kjfe")?;
        kjfe_scale(tape, &head, input.joint_feats, input.joints_img, slope)?.1
    } else {
        input.joints_img
    };
    let n = if flags.bvfe {
        let head = ScaleHead::from_bound(params, "bvfe")?;
        bvfe_scale(
            tape,
            &head,
            input.bone_feats,
            input.bones_img,
            input.root,
            links.clone(),
            config.joints(),
            slope,
        )?
        .1
    } else {
        input.joints_img
    };
    let attention = if flags.mfam {
        let head = AttentionHead::from_bound(params)?;
        Some(mfam_map(tape, &head, input.frame_feats, slope)?)
    } else {
        None
    };

    let mut images = Vec::with_capacity(flags.streams());
    for (src, emb) in [(m, "emb.kj"), (n, "emb.bv")] {
        let img = embed_to_image(tape, params.var(emb)?, src)?;
        images.push(match attention {
            Some(a) => apply_attention(tape, img, a)?,
            None => img,
        });
    }
    if flags.jvtm {
        for (src, emb) in [(m, "emb.kjv"), (n, "emb.bvv")] {
            images.push(jvtm(tape, src, params.var(emb)?, S::one())?);
        }
    }
    if flags.te {
        for (img, name) in images.iter_mut().zip(STREAM_NAMES) {
            *img = temporal_embed(tape, *img, params.var(&format!("te.{name}"))?)?;
        }
    }
    Ok(EncodedVars {
        images,
        attention,
        scaled_joints: m,
        scaled_bones: n,
    })
}

/// Encodes one sample outside of training and returns the tensor values.
pub fn encode_values(params: &ModelParams<f32>, input: &SampleInput<f32>) -> Result<EncodedBundle> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let links: Rc<[TreeLink]> = params.config.topology.links().into();
    let vars = InputVars::record(&mut tape, input);
    let enc = encode(&mut tape, &params.config, &bound, &links, &vars)?;
    let get = |v: Var| tape.value(v).clone();
    Ok(EncodedBundle {
        tf_kjei: get(enc.images[0]),
        tf_bvei: get(enc.images[1]),
        t_kjvi: enc.images.get(2).map(|&v| get(v)),
        t_bvvi: enc.images.get(3).map(|&v| get(v)),
        attention: enc.attention.map(get),
        scaled_joints: get(enc.scaled_joints),
        scaled_bones: get(enc.scaled_bones),
    })
}
