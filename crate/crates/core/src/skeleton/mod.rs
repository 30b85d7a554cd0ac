//! Skeleton sequences, their tree topology, file formats, preprocessing,
//! dataset splits and the synthetic motion generator.

mod jsonl;
mod ntu;
mod preprocess;
mod split;
mod synth;
mod topology;

pub use jsonl::{parse_jsonl, parse_jsonl_str, write_jsonl, write_jsonl_string};
pub use ntu::{parse_ntu, parse_ntu_str, NtuFileMeta};
pub use preprocess::{center_root, preprocess, resample};
pub use split::{split_dataset, DatasetSplit, Protocol, NTU60_TRAIN_SUBJECTS};
pub use synth::{synth_generate, MotionKind, SynthConfig, MAX_SYNTH_CLASSES};
pub use topology::{reconstruct_joints, Topology};

use crate::error::{AfeError, Result};

/// One 3-D joint position in meters.
pub type Joint = [f32; 3];

/// Ordered frames of `J` joints with recording metadata.
///
/// Construction checks that there are at least two frames, that every frame
/// has the same joint count, and that all coordinates are finite.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonSequence {
    frames: Vec<Vec<Joint>>,
    pub action_label: usize,
    pub subject_id: u32,
    pub camera_id: u32,
    pub setup_id: u32,
    pub source: String,
}

impl SkeletonSequence {
    pub fn new(frames: Vec<Vec<Joint>>, action_label: usize) -> Result<Self> {
        if frames.len() < 2 {
            return Err(AfeError::Sequence(format!(
                "need at least 2 frames, got {}",
                frames.len()
            )));
        }
        let joints = frames[0].len();
        if joints == 0 {
            return Err(AfeError::Sequence("frames have no joints".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != joints {
                return Err(AfeError::Sequence(format!(
                    "frame {t} has {} joints, expected {joints}",
                    f.len()
                )));
            }
            if f.iter().flatten().any(|c| !c.is_finite()) {
                return Err(AfeError::Sequence(format!("frame {t} has a non-finite coordinate")));
            }
        }
        Ok(Self {
            frames,
            action_label,
            subject_id: 0,
            camera_id: 0,
            setup_id: 0,
            source: String::new(),
        })
    }

    pub fn with_meta(mut self, subject_id: u32, camera_id: u32, setup_id: u32) -> Self {
        self.subject_id = subject_id;
        self.camera_id = camera_id;
        self.setup_id = setup_id;
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }

    pub fn frames(&self) -> &[Vec<Joint>] {
        &self.frames
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn joint_count(&self) -> usize {
        self.frames[0].len()
    }

    /// Same metadata, new frames (validated).
    pub fn with_frames(&self, frames: Vec<Vec<Joint>>) -> Result<Self> {
        let mut out = Self::new(frames, self.action_label)?;
        out.subject_id = self.subject_id;
        out.camera_id = self.camera_id;
        out.setup_id = self.setup_id;
        out.source = self.source.clone();
        Ok(out)
    }
}
