//! Multi-stream convolutional classifier over the enhanced images, plus a
//! static FLOPs counter.

use std::rc::Rc;

use afe_autograd::{Scalar, Tape, TreeLink, Var};

use crate::encoder::{encode, InputVars, SampleInput};
use crate::error::Result;
use crate::model::{Bound, ModelConfig, ModelParams};

/// Three conv layers of one stream.
#[derive(Debug, Clone, Copy)]
pub struct StreamVars {
    pub convs: [(Var, Var); 3],
}

impl StreamVars {
    pub fn from_bound(params: &Bound, stream: usize) -> Result<Self> {
        let layer = |l: usize| -> Result<(Var, Var)> {
            Ok((
                params.var(&format!("stream{stream}.conv{l}.weight"))?,
                params.var(&format!("stream{stream}.conv{l}.bias"))?,
            ))
        };
        Ok(Self {
            convs: [layer(1)?, layer(2)?, layer(3)?],
        })
    }
}

/// conv(stride 2) -> maxpool -> leaky, three times, flattened to `[F]`.
pub fn stream_forward<S: Scalar>(
    tape: &mut Tape<S>,
    stream: &StreamVars,
    image: Var,
    padding: usize,
    slope: S,
) -> Result<Var> {
    let mut x = image;
    for &(w, b) in &stream.convs {
        x = tape.conv2d(x, w, b, 2, padding)?;
        x = tape.maxpool2d(x)?;
        x = tape.leaky_relu(x, slope)?;
    }
    let n = tape.value(x).len();
    Ok(tape.reshape(x, &[n])?)
}

/// Concatenated stream features `[B, S*F]` through fc1 -> leaky -> fc2.
pub fn classify<S: Scalar>(tape: &mut Tape<S>, params: &Bound, features: Var, slope: S) -> Result<Var> {
    let h = tape.linear(features, params.var("cls.fc1.weight")?, Some(params.var("cls.fc1.bias")?))?;
    let h = tape.leaky_relu(h, slope)?;
    Ok(tape.linear(h, params.var("cls.fc2.weight")?, Some(params.var("cls.fc2.bias")?))?)
}

/// Stream features of one set of images, concatenated to `[1, S*F]`.
pub fn stream_features<S: Scalar>(tape: &mut Tape<S>, config: &ModelConfig, params: &Bound, images: &[Var]) -> Result<Var> {
    let slope = S::from_f64(config.leaky_slope as f64);
    let mut feats = Vec::with_capacity(images.len());
    for (s, &img) in images.iter().enumerate() {
        let sv = StreamVars::from_bound(params, s)?;
        feats.push(stream_forward(tape, &sv, img, config.padding, slope)?);
    }
    let joined = tape.concat(&feats)?;
    let n = tape.value(joined).len();
    Ok(tape.reshape(joined, &[1, n])?)
}

/// Encodes and classifies a batch; returns logits `[B, classes]`.
pub fn forward_batch<S: Scalar>(
    tape: &mut Tape<S>,
    config: &ModelConfig,
    params: &Bound,
    links: &Rc<[TreeLink]>,
    batch: &[&SampleInput<S>],
) -> Result<Var> {
    let mut rows = Vec::with_capacity(batch.len());
    for input in batch {
        let vars = InputVars::record(tape, input);
        let enc = encode(tape, config, params, links, &vars)?;
        rows.push(stream_features(tape, config, params, &enc.images)?);
    }
    let features = tape.concat(&rows)?;
    classify(tape, params, features, S::from_f64(config.leaky_slope as f64))
}

/// Logits of a batch without recording gradients.
pub fn logits(params: &ModelParams<f32>, batch: &[&SampleInput<f32>]) -> Result<Vec<Vec<f32>>> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let links: Rc<[TreeLink]> = params.config.topology.links().into();
    let out = forward_batch(&mut tape, &params.config, &bound, &links, batch)?;
    let classes = params.config.classes;
    Ok(tape.value(out).data().chunks(classes).map(<[f32]>::to_vec).collect())
}

/// Softmax probabilities and the arg-max class; ties go to the lowest index.
pub fn predict_from_logits(logits: &[f32]) -> (usize, Vec<f64>) {
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    let exps: Vec<f64> = logits.iter().map(|&v| (v as f64 - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / z).collect();
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    (best, probs)
}

/// Predicted class and probability vector of one sample.
pub fn predict(params: &ModelParams<f32>, input: &SampleInput<f32>) -> Result<(usize, Vec<f64>)> {
    let l = logits(params, &[input])?;
    Ok(predict_from_logits(&l[0]))
}

/// Multiply-accumulate count of one layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub layers: Vec<LayerCost>,
    /// `2 x` the summed MACs
    pub total_flops: u64,
    pub params: u64,
}

impl LayerCost {
    /// `in_features x out_features` MACs applied to `rows` rows.
    pub fn fc(name: impl Into<String>, rows: u64, in_features: u64, out_features: u64) -> Self {
        Self {
            name: name.into(),
            macs: rows * in_features * out_features,
        }
    }

    /// 3x3 convolution producing `c_out x h x w` from `c_in` channels.
    pub fn conv3x3(name: impl Into<String>, c_out: u64, h: u64, w: u64, c_in: u64) -> Self {
        Self {
            name: name.into(),
            macs: c_out * h * w * c_in * 9,
        }
    }
}

impl FlopsReport {
    pub fn from_layers(layers: Vec<LayerCost>, params: u64) -> Self {
        let total: u64 = layers.iter().map(|l| l.macs).sum();
        Self {
            layers,
            total_flops: 2 * total,
            params,
        }
    }

    pub fn total_macs(&self) -> u64 {
        self.layers.iter().map(|l| l.macs).sum()
    }

    pub fn gflops(&self) -> f64 {
        self.total_flops as f64 / 1e9
    }
}

/// Static cost of one single-sequence forward pass.
///
/// Counted: conv layers `C_out H' W' C_in 9`, fully connected layers
/// `in x out` (per row they are applied to), embedding matmuls `3 T J T`,
/// and the attention products. Elementwise ops, pooling and softmax are free.
pub fn count_flops(config: &ModelConfig) -> Result<FlopsReport> {
    let trace = config.spatial_trace()?;
    let (t, j, b, h) = (
        config.frames as u64,
        config.joints() as u64,
        config.bones() as u64,
        config.head_hidden as u64,
    );
    let f = config.flags;
    let mut layers = Vec::new();
    if f.kjfe {
        layers.push(LayerCost::fc("kjfe.fc1", j, 3 * t, h));
        layers.push(LayerCost::fc("kjfe.fc2", j, h, 1));
    }
    if f.bvfe {
        layers.push(LayerCost::fc("bvfe.fc1", b, 3 * t, h));
        layers.push(LayerCost::fc("bvfe.fc2", b, h, 1));
    }
    if f.mfam {
        layers.push(LayerCost::fc("mfam.fc", t, 3 * j, j));
        layers.push(LayerCost::fc("mfam.q", t, j, j));
        layers.push(LayerCost::fc("mfam.k", t, j, j));
        layers.push(LayerCost::fc("mfam.scores", t, j, t));
    }
    let streams = f.streams();
    for name in &crate::model::STREAM_NAMES[..streams] {
        // T x J embedding times a J x T matrix, per channel
        layers.push(LayerCost::fc(format!("emb.{name}"), 3 * t, j, t));
    }
    for s in 0..streams {
        let mut c_in = 3u64;
        for (l, &c_out) in config.channels.iter().enumerate() {
            let hw = trace[1 + 2 * l] as u64;
            layers.push(LayerCost::conv3x3(format!("stream{s}.conv{}", l + 1), c_out as u64, hw, hw, c_in));
            c_in = c_out as u64;
        }
    }
    let width = (streams * config.feature_width()?) as u64;
    layers.push(LayerCost::fc("cls.fc1", 1, width, config.fc_hidden as u64));
    layers.push(LayerCost::fc("cls.fc2", 1, config.fc_hidden as u64, config.classes as u64));
    let params = config
        .param_shapes()?
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() as u64)
        .sum();
    Ok(FlopsReport::from_layers(layers, params))
}
