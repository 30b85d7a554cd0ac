use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::SkeletonSequence;
use crate::error::{AfeError, Result};

/// Training subjects of the NTU RGB+D 60 cross-subject benchmark.
pub const NTU60_TRAIN_SUBJECTS: [u32; 20] = [
    1, 2, 4, 5, 8, 9, 13, 14, 15, 16, 17, 18, 19, 25, 27, 28, 31, 34, 35, 38,
];

/// How sequences are partitioned into train and test.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Protocol {
    /// Subjects in the set train, everyone else tests.
    CrossSubject(BTreeSet<u32>),
    /// Camera 1 tests, cameras 2 and 3 train.
    CrossView,
    /// Even setup ids train, odd setup ids test.
    CrossSetup,
}

impl Protocol {
    pub fn cross_subject_default() -> Self {
        Self::CrossSubject(NTU60_TRAIN_SUBJECTS.into_iter().collect())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::CrossSubject(_) => "cross-subject",
            Self::CrossView => "cross-view",
            Self::CrossSetup => "cross-setup",
        }
    }

    fn is_train(&self, s: &SkeletonSequence) -> bool {
        match self {
            Self::CrossSubject(ids) => ids.contains(&s.subject_id),
            Self::CrossView => s.camera_id != 1,
            Self::CrossSetup => s.setup_id % 2 == 0,
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = AfeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross-subject" | "xsub" => Ok(Self::cross_subject_default()),
            "cross-view" | "xview" => Ok(Self::CrossView),
            "cross-setup" | "xset" => Ok(Self::CrossSetup),
            other => Err(AfeError::Usage(format!(
                "unknown protocol {other:?} (expected cross-subject, cross-view or cross-setup)"
            ))),
        }
    }
}

/// Indices into the sequence list on each side of a split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub protocol: Protocol,
}

pub fn split_dataset(sequences: &[SkeletonSequence], protocol: &Protocol) -> DatasetSplit {
    let (train, test) = (0..sequences.len()).partition(|&i| protocol.is_train(&sequences[i]));
    DatasetSplit {
        train,
        test,
        protocol: protocol.clone(),
    }
}
