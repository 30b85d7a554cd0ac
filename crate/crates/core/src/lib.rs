//! Skeleton data handling and the action-feature-enhanced CNN recognizer.

pub mod checkpoint;
pub mod encoder;
pub mod error;
pub mod model;
pub mod recognizer;
pub mod skeleton;
pub mod trainer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use encoder::{encode, encode_values, EncodedBundle, SampleInput};
pub use error::{AfeError, Result};
pub use model::{AblationFlags, ModelConfig, ModelParams};
pub use recognizer::{count_flops, predict, FlopsReport};
pub use trainer::{
    ablate, evaluate, standard_variants, train, train_with, AblationResult, ConfusionMatrix, Dataset, Evaluation,
    TrainConfig, TrainLog, Variant,
};
