//! Reader for the NTU RGB+D `.skeleton` text layout.
//!
//! ```text
//! <frame count>
//! per frame:  <body count>
//!   per body: <body info line: body id first>
//!             <joint count (25)>
//!             25 x <x y z ...>
//! ```

use std::path::{Path, PathBuf};
use std::sync::LazyLock;

use regex::Regex;

use super::{Joint, SkeletonSequence};
use crate::error::{AfeError, Result};

pub const NTU_JOINTS: usize = 25;

static NAME_PATTERN: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})").unwrap());

/// Metadata encoded in an NTU file name (`SsssCcccPpppRrrrAaaa`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NtuFileMeta {
    pub setup: u32,
    pub camera: u32,
    pub subject: u32,
    pub replication: u32,
    pub action: u32,
}

impl NtuFileMeta {
    pub fn from_name(name: &str) -> Option<Self> {
        let caps = NAME_PATTERN.captures(name)?;
        let field = |i: usize| caps[i].parse::<u32>().ok();
        Some(Self {
            setup: field(1)?,
            camera: field(2)?,
            subject: field(3)?,
            replication: field(4)?,
            action: field(5)?,
        })
    }
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn next_line(&mut self) -> Result<(usize, &'a str)> {
        loop {
            match self.iter.next() {
                Some((i, l)) if l.trim().is_empty() => self.last = i + 1,
                Some((i, l)) => {
                    self.last = i + 1;
                    return Ok((i + 1, l));
                }
                None => return Err(self.err(self.last + 1, "unexpected end of file")),
            }
        }
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> AfeError {
        AfeError::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    fn count(&mut self, what: &str) -> Result<usize> {
        let (n, l) = self.next_line()?;
        l.trim()
            .parse()
            .map_err(|_| self.err(n, format!("expected {what}, found {:?}", l.trim())))
    }
}

struct BodyTrack {
    id: String,
    /// (frame index, joints)
    frames: Vec<(usize, Vec<Joint>)>,
}

impl BodyTrack {
    fn motion_energy(&self) -> f64 {
        self.frames
            .windows(2)
            .map(|w| {
                w[0].1
                    .iter()
                    .zip(&w[1].1)
                    .map(|(a, b)| (0..3).map(|d| ((b[d] - a[d]) as f64).powi(2)).sum::<f64>())
                    .sum::<f64>()
            })
            .sum()
    }
}

/// Parses NTU skeleton text; `name` supplies the metadata pattern.
pub fn parse_ntu_str(text: &str, path: &Path) -> Result<SkeletonSequence> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let meta = NtuFileMeta::from_name(&name).ok_or_else(|| AfeError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: "file name does not match SsssCcccPpppRrrrAaaa".into(),
    })?;
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
        last: 0,
    };

    let frame_count = lines.count("frame count")?;
    let mut tracks: Vec<BodyTrack> = Vec::new();
    for frame in 0..frame_count {
        let bodies = lines.count("body count")?;
        for _ in 0..bodies {
            let (n, info) = lines.next_line()?;
            let id = info
                .split_whitespace()
                .next()
                .ok_or_else(|| lines.err(n, "empty body info line"))?
                .to_string();
            let (n, l) = lines.next_line()?;
            let joints: usize = l
                .trim()
                .parse()
                .map_err(|_| lines.err(n, format!("expected joint count, found {:?}", l.trim())))?;
            if joints != NTU_JOINTS {
                return Err(lines.err(n, format!("expected {NTU_JOINTS} joints, found {joints}")));
            }
            let mut pose = Vec::with_capacity(NTU_JOINTS);
            for _ in 0..NTU_JOINTS {
                let (n, l) = lines.next_line()?;
                let mut it = l.split_whitespace().map(str::parse::<f32>);
                let mut xyz = [0.0f32; 3];
                for c in &mut xyz {
                    *c = match it.next() {
                        Some(Ok(v)) if v.is_finite() => v,
                        _ => return Err(lines.err(n, format!("malformed joint line {:?}", l.trim()))),
                    };
                }
                pose.push(xyz);
            }
            match tracks.iter_mut().find(|t| t.id == id) {
                Some(t) => t.frames.push((frame, pose)),
                None => tracks.push(BodyTrack {
                    id,
                    frames: vec![(frame, pose)],
                }),
            }
        }
    }

    // largest motion energy wins; ties keep the first body seen
    let mut best: Option<(f64, &BodyTrack)> = None;
    for t in &tracks {
        let e = t.motion_energy();
        if best.map_or(true, |(b, _)| e > b) {
            best = Some((e, t));
        }
    }
    let (_, track) = best.ok_or_else(|| AfeError::EmptyBody(path.to_path_buf()))?;
    let frames: Vec<Vec<Joint>> = track.frames.iter().map(|(_, p)| p.clone()).collect();
    let seq = SkeletonSequence::new(frames, meta.action as usize).map_err(|e| AfeError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })?;
    Ok(seq
        .with_meta(meta.subject, meta.camera, meta.setup)
        .with_source(path.display().to_string()))
}

/// Reads and parses one `.skeleton` file.
pub fn parse_ntu(path: impl AsRef<Path>) -> Result<SkeletonSequence> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| AfeError::io(PathBuf::from(path), e))?;
    parse_ntu_str(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn body(id: &str, offset: f32) -> String {
        let mut s = format!("{id} 0 1 1 1 1 0 0.01 0.02 2\n25\n");
        for j in 0..25 {
            s.push_str(&format!(
                "{} {} {} 250.1 200.2 900.3 500.4 0.1 0.2 0.3 0.9 2\n",
                j as f32 * 0.1 + offset,
                0.5,
                3.0
            ));
        }
        s
    }

    #[test]
    fn name_pattern() {
        let m = NtuFileMeta::from_name("S001C002P003R002A013.skeleton").unwrap();
        assert_eq!((m.setup, m.camera, m.subject, m.replication, m.action), (1, 2, 3, 2, 13));
        assert!(NtuFileMeta::from_name("foo.skeleton").is_none());
    }

    #[test]
    fn two_frames_one_body() {
        let text = format!("2\n1\n{}1\n{}", body("72057594037931101", 0.0), body("72057594037931101", 0.1));
        let seq = parse_ntu_str(&text, Path::new("S001C002P003R002A013.skeleton")).unwrap();
        assert_eq!(seq.frame_count(), 2);
        assert_eq!(seq.joint_count(), 25);
        assert_eq!((seq.camera_id, seq.subject_id, seq.action_label, seq.setup_id), (2, 3, 13, 1));
        assert!((seq.frames()[1][0][0] - 0.1).abs() < 1e-7);
    }

    #[test]
    fn empty_frame_is_dropped() {
        let text = format!("3\n1\n{}0\n1\n{}", body("7", 0.0), body("7", 0.2));
        let seq = parse_ntu_str(&text, Path::new("S001C001P001R001A001.skeleton")).unwrap();
        assert_eq!(seq.frame_count(), 2);
    }

    #[test]
    fn picks_the_moving_body() {
        let text = format!(
            "2\n2\n{}{}2\n{}{}",
            body("1", 0.0),
            body("2", 0.0),
            body("1", 0.0),
            body("2", 0.5)
        );
        let seq = parse_ntu_str(&text, Path::new("S001C001P001R001A050.skeleton")).unwrap();
        assert!((seq.frames()[1][0][0] - 0.5).abs() < 1e-7);
    }

    #[test]
    fn no_bodies_is_empty_body_error() {
        let err = parse_ntu_str("2\n0\n0\n", Path::new("S001C001P001R001A001.skeleton")).unwrap_err();
        assert!(matches!(err, AfeError::EmptyBody(_)));
    }

    #[test]
    fn wrong_joint_count_reports_line() {
        let text = "1\n1\n7 0 1 1 1 1 0 0 0 2\n24\n";
        let err = parse_ntu_str(text, Path::new("S001C001P001R001A001.skeleton")).unwrap_err();
        match err {
            AfeError::Parse { line, msg, .. } => {
                assert_eq!(line, 4);
                assert!(msg.contains("expected 25 joints"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_joint_line_reports_line() {
        let mut b = body("7", 0.0);
        b = b.replacen("0.5 3 250.1", "0.5 abc 250.1", 1);
        let text = format!("1\n1\n{b}");
        let err = parse_ntu_str(&text, Path::new("S001C001P001R001A001.skeleton")).unwrap_err();
        assert!(matches!(err, AfeError::Parse { line: 5, .. }), "{err}");
    }
}
