//! One sequence per line:
//! `{"label": int, "subject": int, "camera": int, "setup": int, "source": str, "frames": [[[x,y,z] x J] x T]}`.
//!
//! `setup` and `source` are optional on input. Coordinates are written in
//! the shortest decimal form that reads back to the identical `f32` (at most
//! 9 significant digits) and parsed with correct rounding, so a write/parse
//! round trip is exact.

use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;
use serde_json::Number;

use super::{Joint, SkeletonSequence};
use crate::error::{AfeError, Result};

#[derive(Deserialize)]
struct Record {
    label: usize,
    subject: u32,
    camera: u32,
    #[serde(default)]
    setup: u32,
    #[serde(default)]
    source: String,
    frames: Vec<Vec<Vec<Number>>>,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> AfeError {
    AfeError::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("line {line}: {}", msg.into()),
    }
}

/// Parses JSON-lines text. Blank lines are skipped; an empty input is an
/// empty dataset. The joint count is fixed by the first frame seen.
pub fn parse_jsonl_str(text: &str, path: &Path) -> Result<Vec<SkeletonSequence>> {
    let mut out = Vec::new();
    let mut joints: Option<usize> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| parse_err(path, line, e.to_string()))?;
        let mut frames = Vec::with_capacity(rec.frames.len());
        for frame in &rec.frames {
            let j = *joints.get_or_insert(frame.len());
            if frame.len() != j {
                return Err(parse_err(path, line, format!("expected {j} joints, found {}", frame.len())));
            }
            let mut pose = Vec::with_capacity(j);
            for joint in frame {
                if joint.len() != 3 {
                    return Err(parse_err(
                        path,
                        line,
                        format!("expected 3 coordinates per joint, found {}", joint.len()),
                    ));
                }
                let mut xyz: Joint = [0.0; 3];
                for (c, n) in xyz.iter_mut().zip(joint) {
                    *c = n
                        .to_string()
                        .parse::<f32>()
                        .map_err(|_| parse_err(path, line, format!("bad coordinate {n}")))?;
                }
                pose.push(xyz);
            }
            frames.push(pose);
        }
        let seq = SkeletonSequence::new(frames, rec.label).map_err(|e| parse_err(path, line, e.to_string()))?;
        out.push(
            seq.with_meta(rec.subject, rec.camera, rec.setup)
                .with_source(rec.source),
        );
    }
    Ok(out)
}

pub fn parse_jsonl(path: impl AsRef<Path>) -> Result<Vec<SkeletonSequence>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AfeError::io(path, e))?;
    parse_jsonl_str(&text, path)
}

fn push_f32(out: &mut String, v: f32) {
    // Display for f32 is the shortest round-tripping decimal; JSON needs a
    // number token, which it always is for finite values.
    write!(out, "{v}").unwrap();
}

/// Serializes sequences, one JSON object per line, each line terminated by `\n`.
pub fn write_jsonl_string(seqs: &[SkeletonSequence]) -> String {
    let mut out = String::new();
    for s in seqs {
        write!(
            out,
            "{{\"label\":{},\"subject\":{},\"camera\":{},\"setup\":{},\"source\":{},\"frames\":[",
            s.action_label,
            s.subject_id,
            s.camera_id,
            s.setup_id,
            serde_json::to_string(&s.source).unwrap()
        )
        .unwrap();
        for (t, frame) in s.frames().iter().enumerate() {
            out.push_str(if t == 0 { "[" } else { ",[" });
            for (j, p) in frame.iter().enumerate() {
                out.push_str(if j == 0 { "[" } else { ",[" });
                for (d, &v) in p.iter().enumerate() {
                    if d > 0 {
                        out.push(',');
                    }
                    push_f32(&mut out, v);
                }
                out.push(']');
            }
            out.push(']');
        }
        out.push_str("]}\n");
    }
    out
}

pub fn write_jsonl(seqs: &[SkeletonSequence], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, write_jsonl_string(seqs)).map_err(|e| AfeError::io(path, e))
}
