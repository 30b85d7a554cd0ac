//! Mini-batch Adam training, evaluation and the ablation harness.

use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::rc::Rc;

use afe_autograd::{adam_step, AdamState, Tape, Tensor, TreeLink};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::SampleInput;
use crate::error::{AfeError, Result};
use crate::model::{AblationFlags, ModelConfig, ModelParams};
use crate::recognizer::{forward_batch, logits, predict_from_logits};
use crate::skeleton::{preprocess, DatasetSplit, SkeletonSequence, Topology};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    /// factor applied once the epoch number exceeds `decay_after`
    pub lr_decay: f64,
    pub decay_after: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub flags: AblationFlags,
    pub frames: usize,
    pub channels: [usize; 3],
    pub fc_hidden: usize,
    pub head_hidden: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            lr_decay: 0.1,
            decay_after: 20,
            batch_size: 64,
            epochs: 60,
            seed: 0,
            flags: AblationFlags::FULL,
            frames: 64,
            channels: [32, 64, 128],
            fc_hidden: 256,
            head_hidden: 64,
        }
    }
}

impl TrainConfig {
    /// Learning rate of a 1-based epoch.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch > self.decay_after {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }

    pub fn model_config(&self, topology: &Topology, classes: usize) -> ModelConfig {
        ModelConfig {
            frames: self.frames,
            channels: self.channels,
            fc_hidden: self.fc_hidden,
            head_hidden: self.head_hidden,
            flags: self.flags,
            ..ModelConfig::new(topology.clone(), classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) || self.batch_size == 0 || self.epochs == 0 {
            return Err(AfeError::Usage(
                "lr, lr_decay, batch_size and epochs must all be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Preprocessed samples ready for the model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub topology: Topology,
    pub frames: usize,
    pub classes: usize,
    pub samples: Vec<SampleInput<f32>>,
}

impl Dataset {
    /// Centers, resamples and converts every sequence. `classes` is one more
    /// than the largest label.
    pub fn prepare(seqs: &[SkeletonSequence], topology: &Topology, frames: usize) -> Result<Self> {
        let samples = seqs
            .iter()
            .map(|s| SampleInput::from_sequence(&preprocess(s, topology.root(), frames)?, topology))
            .collect::<Result<Vec<_>>>()?;
        let classes = seqs.iter().map(|s| s.action_label + 1).max().unwrap_or(0);
        Ok(Self {
            topology: topology.clone(),
            frames,
            classes,
            samples,
        })
    }

    pub fn select(&self, indices: &[usize]) -> Vec<&SampleInput<f32>> {
        indices.iter().map(|&i| &self.samples[i]).collect()
    }
}

/// Counts indexed by (true class, predicted class).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.classes + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.classes..(truth + 1) * self.classes]
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        self.row(truth).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Diagonal over row sum; `None` for classes without samples.
    pub fn per_class(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| match self.row_sum(c) {
                0 => None,
                n => Some(self.get(c, c) as f64 / n as f64),
            })
            .collect()
    }

    /// One line per true class, comma-separated counts.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for c in 0..self.classes {
            let row: Vec<String> = self.row(c).iter().map(u64::to_string).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<Option<f64>>,
    pub predictions: Vec<usize>,
}

impl Evaluation {
    /// Mean over classes that have samples.
    pub fn mean_class_accuracy(&self) -> f64 {
        let defined: Vec<f64> = self.per_class.iter().flatten().copied().collect();
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

const EVAL_CHUNK: usize = 64;

pub fn evaluate(params: &ModelParams<f32>, samples: &[&SampleInput<f32>]) -> Result<Evaluation> {
    if samples.is_empty() {
        return Err(AfeError::Usage("cannot evaluate on an empty test set".into()));
    }
    let classes = params.config.classes;
    let mut confusion = ConfusionMatrix::new(classes);
    let mut predictions = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(EVAL_CHUNK) {
        for (row, s) in logits(params, chunk)?.iter().zip(chunk) {
            if s.label >= classes {
                return Err(AfeError::Config(format!(
                    "label {} outside the model's {classes} classes",
                    s.label
                )));
            }
            let (pred, _) = predict_from_logits(row);
            confusion.record(s.label, pred);
            predictions.push(pred);
        }
    }
    Ok(Evaluation {
        accuracy: confusion.accuracy(),
        per_class: confusion.per_class(),
        confusion,
        predictions,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    /// mean training loss over the epoch's samples
    pub loss: f64,
    /// NaN when the split has no test samples
    pub test_acc: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainLog {
    /// `epoch,loss,test_acc,lr` lines without a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            writeln!(out, "{},{},{},{}", e.epoch, e.loss, e.test_acc, e.lr).unwrap();
        }
        out
    }
}

/// Loss on a batch and the gradients of every trainable parameter, in
/// `params` order.
pub fn batch_gradients(
    params: &ModelParams<f32>,
    batch: &[&SampleInput<f32>],
) -> Result<(f64, Vec<(String, Tensor<f32>)>)> {
    let links: Rc<[TreeLink]> = params.config.topology.links().into();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let out = forward_batch(&mut tape, &params.config, &bound, &links, batch)?;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let loss = tape.cross_entropy(out, &labels)?;
    tape.backward(loss)?;
    let grads = bound
        .iter()
        .filter(|(name, _)| params.config.is_trainable(name))
        .map(|(name, v)| {
            let g = tape
                .grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(tape.shape(v)));
            (name.to_string(), g)
        })
        .collect();
    Ok((tape.value(loss).item() as f64, grads))
}

/// Mean cross-entropy of a batch.
pub fn batch_loss(params: &ModelParams<f32>, batch: &[&SampleInput<f32>]) -> Result<f64> {
    let links: Rc<[TreeLink]> = params.config.topology.links().into();
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, false);
    let out = forward_batch(&mut tape, &params.config, &bound, &links, batch)?;
    let labels: Vec<usize> = batch.iter().map(|s| s.label).collect();
    let loss = tape.cross_entropy(out, &labels)?;
    Ok(tape.value(loss).item() as f64)
}

/// Adam over the trainable parameters of a model.
pub struct Optimizer {
    names: Vec<String>,
    state: AdamState<f32>,
}

impl Optimizer {
    pub fn new(params: &ModelParams<f32>) -> Self {
        let names: Vec<String> = params
            .names()
            .filter(|n| params.config.is_trainable(n))
            .map(str::to_string)
            .collect();
        let tensors: Vec<Tensor<f32>> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
        Self {
            state: AdamState::new(&tensors),
            names,
        }
    }

    pub fn step(&mut self, params: &mut ModelParams<f32>, grads: &[(String, Tensor<f32>)], lr: f64) -> Result<()> {
        if grads.len() != self.names.len() || grads.iter().zip(&self.names).any(|((g, _), n)| g != n) {
            return Err(AfeError::Usage("gradients do not match the optimizer's parameters".into()));
        }
        let mut current: Vec<Tensor<f32>> = self.names.iter().map(|n| params.get(n).unwrap().clone()).collect();
        let g: Vec<Tensor<f32>> = grads.iter().map(|(_, t)| t.clone()).collect();
        adam_step(&mut current, &g, &mut self.state, lr)?;
        for (n, t) in self.names.iter().zip(current) {
            *params.get_mut(n).unwrap() = t;
        }
        Ok(())
    }
}

pub fn train(dataset: &Dataset, split: &DatasetSplit, config: &TrainConfig) -> Result<(ModelParams<f32>, TrainLog)> {
    train_with(dataset, split, config, |_| ControlFlow::Continue(()))
}

/// Like [`train`], calling `on_epoch` after every epoch. Returning
/// `ControlFlow::Break` ends training after that epoch.
pub fn train_with(
    dataset: &Dataset,
    split: &DatasetSplit,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog) -> ControlFlow<()>,
) -> Result<(ModelParams<f32>, TrainLog)> {
    config.validate()?;
    if split.train.is_empty() {
        return Err(AfeError::Usage("the training split is empty".into()));
    }
    if dataset.frames != config.frames {
        return Err(AfeError::Config(format!(
            "dataset was resampled to {} frames, config expects {}",
            dataset.frames, config.frames
        )));
    }
    let model = config.model_config(&dataset.topology, dataset.classes);
    let mut params = ModelParams::init(&model, config.seed)?;
    let mut optimizer = Optimizer::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5348_5546_464c_4521);
    let mut order = split.train.clone();
    let test = dataset.select(&split.test);
    let mut log = TrainLog::default();
    for epoch in 1..=config.epochs {
        let lr = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch = dataset.select(chunk);
            let (loss, grads) = batch_gradients(&params, &batch)?;
            loss_sum += loss * chunk.len() as f64;
            optimizer.step(&mut params, &grads, lr)?;
        }
        let test_acc = if test.is_empty() {
            f64::NAN
        } else {
            evaluate(&params, &test)?.accuracy
        };
        let entry = EpochLog {
            epoch,
            loss: loss_sum / order.len() as f64,
            test_acc,
            lr,
        };
        let flow = on_epoch(&entry);
        log.epochs.push(entry);
        if flow.is_break() {
            break;
        }
    }
    Ok((params, log))
}

/// One configuration of the ablation grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Variant {
    pub name: String,
    pub flags: AblationFlags,
}

impl Variant {
    pub fn new(name: &str, flags: AblationFlags) -> Self {
        Self {
            name: name.to_string(),
            flags,
        }
    }
}

/// raw, single modules, both scalings, attention, full, and full without
/// velocity streams.
pub fn standard_variants() -> Vec<Variant> {
    let raw = AblationFlags::RAW;
    let both = AblationFlags {
        kjfe: true,
        bvfe: true,
        ..raw
    };
    vec![
        Variant::new("raw", raw),
        Variant::new("kjfe", AblationFlags { kjfe: true, ..raw }),
        Variant::new("bvfe", AblationFlags { bvfe: true, ..raw }),
        Variant::new("kjfe+bvfe", both),
        Variant::new("kjfe+bvfe+mfam", AblationFlags { mfam: true, ..both }),
        Variant::new("full", AblationFlags::FULL),
        Variant::new(
            "full-no-jvtm",
            AblationFlags {
                jvtm: false,
                ..AblationFlags::FULL
            },
        ),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub variant: String,
    pub flags: AblationFlags,
    pub cross_subject: f64,
    pub cross_view: f64,
}

impl AblationResult {
    pub fn mean(&self) -> f64 {
        0.5 * (self.cross_subject + self.cross_view)
    }
}

/// Trains and evaluates every variant on both splits; the final epoch's
/// test accuracy is reported.
pub fn ablate(
    dataset: &Dataset,
    cross_subject: &DatasetSplit,
    cross_view: &DatasetSplit,
    base: &TrainConfig,
    variants: &[Variant],
) -> Result<Vec<AblationResult>> {
    let mut out = Vec::with_capacity(variants.len());
    for v in variants {
        let cfg = TrainConfig {
            flags: v.flags,
            ..base.clone()
        };
        let mut acc = [0.0; 2];
        for (a, split) in acc.iter_mut().zip([cross_subject, cross_view]) {
            let (params, _) = train(dataset, split, &cfg)?;
            *a = evaluate(&params, &dataset.select(&split.test))?.accuracy;
        }
        out.push(AblationResult {
            variant: v.name.clone(),
            flags: v.flags,
            cross_subject: acc[0],
            cross_view: acc[1],
        });
    }
    Ok(out)
}
