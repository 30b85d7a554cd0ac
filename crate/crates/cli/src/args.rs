//! Command-line surface. Every optional numeric flag falls back to the
//! library default when omitted.

use std::path::PathBuf;

use afe_core::skeleton::{Protocol, SynthConfig};
use afe_core::{AblationFlags, TrainConfig};
use clap::{ArgGroup, Args, Parser, Subcommand};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "afe", version, about = "Skeleton action recognition with learnable feature enhancement")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert NTU .skeleton files or a JSONL file into normalized JSONL
    Ingest(IngestArgs),
    /// Generate a synthetic skeleton dataset
    Synth(SynthArgs),
    /// Train a model and write a checkpoint plus a CSV log
    Train(TrainArgs),
    /// Evaluate a checkpoint on one side of a split
    Eval(EvalArgs),
    /// Export the enhanced feature images of one sequence as PPM
    Encode(EncodeArgs),
    /// Time single-sequence inference and report its static cost
    Bench(BenchArgs),
    /// Train the module ablation grid and report accuracies
    Ablate(AblateArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["ntu_dir", "jsonl"])))]
pub struct IngestArgs {
    /// Directory of NTU RGB+D .skeleton files
    #[arg(long)]
    pub ntu_dir: Option<PathBuf>,
    /// Existing JSONL dataset to normalize
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub per_class: Option<usize>,
    #[arg(long, env = "AFE_SEED")]
    pub seed: Option<u64>,
    /// Gaussian joint noise in meters
    #[arg(long)]
    pub noise: Option<f64>,
    /// Camera yaw range in degrees (uniform in +-range)
    #[arg(long)]
    pub yaw: Option<f64>,
    #[arg(long)]
    pub scale_min: Option<f64>,
    #[arg(long)]
    pub scale_max: Option<f64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub amplitude_jitter: Option<f64>,
    #[arg(long)]
    pub phase_jitter: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

impl SynthArgs {
    pub fn to_config(&self) -> SynthConfig {
        let d = SynthConfig::default();
        SynthConfig {
            class_count: self.classes.unwrap_or(d.class_count),
            sequences_per_class: self.per_class.unwrap_or(d.sequences_per_class),
            noise_std: self.noise.unwrap_or(d.noise_std),
            view_yaw_range: self.yaw.unwrap_or(d.view_yaw_range),
            body_scale_range: (
                self.scale_min.unwrap_or(d.body_scale_range.0),
                self.scale_max.unwrap_or(d.body_scale_range.1),
            ),
            seed: self.seed.unwrap_or(d.seed),
            frames: self.frames.unwrap_or(d.frames),
            amplitude_jitter: self.amplitude_jitter.unwrap_or(d.amplitude_jitter),
            phase_jitter: self.phase_jitter.unwrap_or(d.phase_jitter),
        }
    }
}

/// Dataset split selection shared by train, eval and ablate.
#[derive(Debug, Clone, Args)]
pub struct SplitArgs {
    /// cross-subject (xsub), cross-view (xview) or cross-setup (xset)
    #[arg(long, default_value = "xsub")]
    pub protocol: String,
    /// Training subject ids for cross-subject, comma separated
    #[arg(long, value_delimiter = ',')]
    pub train_subjects: Option<Vec<u32>>,
}

impl SplitArgs {
    pub fn protocol(&self) -> CliResult<Protocol> {
        let p: Protocol = self.protocol.parse()?;
        match (p, &self.train_subjects) {
            (Protocol::CrossSubject(_), Some(ids)) => Ok(Protocol::CrossSubject(ids.iter().copied().collect())),
            (_, Some(_)) => Err(CliError::usage("--train-subjects only applies to cross-subject")),
            (p, None) => Ok(p),
        }
    }
}

/// Optimizer, architecture and module switches.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate multiplier applied after --decay-after epochs
    #[arg(long)]
    pub lr_decay: Option<f64>,
    #[arg(long)]
    pub decay_after: Option<usize>,
    #[arg(long, env = "AFE_SEED")]
    pub seed: Option<u64>,
    /// Frames every sequence is resampled to
    #[arg(long)]
    pub frames: Option<usize>,
    /// Conv widths of the three stream layers, e.g. 32,64,128
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub fc_hidden: Option<usize>,
    #[arg(long)]
    pub head_hidden: Option<usize>,
    #[arg(long)]
    pub no_kjfe: bool,
    #[arg(long)]
    pub no_bvfe: bool,
    #[arg(long)]
    pub no_mfam: bool,
    #[arg(long)]
    pub no_te: bool,
    #[arg(long)]
    pub no_jvtm: bool,
}

impl ModelArgs {
    pub fn flags(&self) -> AblationFlags {
        AblationFlags {
            kjfe: !self.no_kjfe,
            bvfe: !self.no_bvfe,
            mfam: !self.no_mfam,
            te: !self.no_te,
            jvtm: !self.no_jvtm,
        }
    }

    pub fn to_config(&self) -> CliResult<TrainConfig> {
        let d = TrainConfig::default();
        let channels = match &self.channels {
            Some(c) if c.len() == 3 => [c[0], c[1], c[2]],
            Some(c) => return Err(CliError::usage(format!("--channels needs three widths, got {}", c.len()))),
            None => d.channels,
        };
        let cfg = TrainConfig {
            lr: self.lr.unwrap_or(d.lr),
            lr_decay: self.lr_decay.unwrap_or(d.lr_decay),
            decay_after: self.decay_after.unwrap_or(d.decay_after),
            batch_size: self.batch.unwrap_or(d.batch_size),
            epochs: self.epochs.unwrap_or(d.epochs),
            seed: self.seed.unwrap_or(d.seed),
            flags: self.flags(),
            frames: self.frames.unwrap_or(d.frames),
            channels,
            fc_hidden: self.fc_hidden.unwrap_or(d.fc_hidden),
            head_hidden: self.head_hidden.unwrap_or(d.head_hidden),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out_checkpoint: PathBuf,
    /// CSV log path; defaults to the checkpoint path with a .csv extension
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub split: SplitArgs,
    /// Which side of the split to score: test, train or all
    #[arg(long, default_value = "test")]
    pub subset: String,
    /// Directory for confusion.csv and confusion.ppm
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
}

/// Where model parameters come from when no training is involved.
#[derive(Debug, Args)]
#[command(group(ArgGroup::new("model_source").required(true).args(["checkpoint", "init"])))]
pub struct ModelSource {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Use freshly initialized parameters
    #[arg(long)]
    pub init: bool,
    /// Seed of --init parameters
    #[arg(long, env = "AFE_SEED")]
    pub seed: Option<u64>,
    /// Class count of --init parameters
    #[arg(long)]
    pub classes: Option<usize>,
    /// Frames of --init parameters
    #[arg(long)]
    pub frames: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// JSONL file holding the sequence
    #[arg(long)]
    pub sequence: PathBuf,
    /// Zero-based line index of the sequence
    #[arg(long, conflicts_with = "id")]
    pub index: Option<usize>,
    /// Select the sequence whose source field equals this value
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub model: ModelSource,
    /// Joint count of --init parameters (15 or 25)
    #[arg(long, default_value_t = 25)]
    pub joints: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Training subject ids for the cross-subject split, comma separated
    #[arg(long, value_delimiter = ',')]
    pub train_subjects: Option<Vec<u32>>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Seeds to average over, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Optional CSV of per-seed results
    #[arg(long)]
    pub out: Option<PathBuf>,
}
