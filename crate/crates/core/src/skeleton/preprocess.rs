use super::{Joint, SkeletonSequence};
use crate::error::{AfeError, Result};

/// Linear interpolation onto `frames` uniformly spaced time positions.
/// The first and last input frames are copied verbatim.
pub fn resample(seq: &SkeletonSequence, frames: usize) -> Result<SkeletonSequence> {
    if frames < 2 {
        return Err(AfeError::Usage(format!("resample target must be >= 2, got {frames}")));
    }
    let src = seq.frames();
    let last = src.len() - 1;
    let mut out = Vec::with_capacity(frames);
    for i in 0..frames {
        if i == 0 {
            out.push(src[0].clone());
            continue;
        }
        if i == frames - 1 {
            out.push(src[last].clone());
            continue;
        }
        let pos = i as f64 * last as f64 / (frames - 1) as f64;
        let lo = (pos.floor() as usize).min(last);
        let hi = (lo + 1).min(last);
        let w = (pos - lo as f64) as f32;
        let frame: Vec<Joint> = src[lo]
            .iter()
            .zip(&src[hi])
            .map(|(a, b)| {
                let mut p = [0.0; 3];
                for d in 0..3 {
                    p[d] = if w == 0.0 { a[d] } else { a[d] + (b[d] - a[d]) * w };
                }
                p
            })
            .collect();
        out.push(frame);
    }
    seq.with_frames(out)
}

/// Subtracts the first frame's root joint from every joint of every frame.
pub fn center_root(seq: &SkeletonSequence, root: usize) -> SkeletonSequence {
    let origin = seq.frames()[0][root];
    let frames = seq
        .frames()
        .iter()
        .map(|f| {
            f.iter()
                .map(|p| [p[0] - origin[0], p[1] - origin[1], p[2] - origin[2]])
                .collect()
        })
        .collect();
    seq.with_frames(frames).expect("centering keeps the shape valid")
}

/// Root-centering followed by resampling to `frames`.
pub fn preprocess(seq: &SkeletonSequence, root: usize, frames: usize) -> Result<SkeletonSequence> {
    resample(&center_root(seq, root), frames)
}
