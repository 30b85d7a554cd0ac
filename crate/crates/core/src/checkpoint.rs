//! Binary parameter container.
//!
//! ```text
//! "AFEC"  u32 version  u32 count
//! count x { u32 name_len, name (utf8), u32 rank, rank x u32 extent, f32 values }
//! ```
//!
//! All integers and floats are little-endian. Configuration scalars are
//! stored as rank-1 entries under `config/`.

use std::path::Path;

use afe_autograd::Tensor;
use indexmap::IndexMap;

use crate::error::{AfeError, Result};
use crate::model::{AblationFlags, ModelConfig, ModelParams};
use crate::skeleton::Topology;

const MAGIC: &[u8; 4] = b"AFEC";
pub const CHECKPOINT_VERSION: u32 = 1;

fn config_entries(c: &ModelConfig) -> Vec<(&'static str, Vec<f32>)> {
    let parents = c
        .topology
        .parents()
        .iter()
        .map(|p| p.map_or(-1.0, |p| p as f32))
        .collect();
    vec![
        ("config/frames", vec![c.frames as f32]),
        ("config/joints", vec![c.joints() as f32]),
        ("config/classes", vec![c.classes as f32]),
        ("config/channels", c.channels.iter().map(|&v| v as f32).collect()),
        ("config/fc_hidden", vec![c.fc_hidden as f32]),
        ("config/head_hidden", vec![c.head_hidden as f32]),
        ("config/padding", vec![c.padding as f32]),
        ("config/flags", c.flags.to_array().iter().map(|&b| b as u8 as f32).collect()),
        ("config/parents", parents),
        ("config/leaky_slope", vec![c.leaky_slope]),
    ]
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_entry(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f32]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u32(out, d as u32);
    }
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn checkpoint_bytes(params: &ModelParams<f32>) -> Vec<u8> {
    let cfg = config_entries(&params.config);
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, (cfg.len() + params.len()) as u32);
    for (name, values) in &cfg {
        put_entry(&mut out, name, &[values.len()], values);
    }
    for (name, t) in params.iter() {
        put_entry(&mut out, name, t.shape(), t.data());
    }
    out
}

pub fn save_checkpoint(params: &ModelParams<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(params)).map_err(|e| AfeError::io(path, e))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| AfeError::Checkpoint("unexpected end of checkpoint".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn config_from(entries: &mut IndexMap<String, Tensor<f32>>) -> Result<ModelConfig> {
    let mut take = |name: &str| -> Result<Vec<f32>> {
        entries
            .shift_remove(&format!("config/{name}"))
            .map(Tensor::into_data)
            .ok_or_else(|| AfeError::Checkpoint(format!("missing config/{name}")))
    };
    let one = |v: Vec<f32>, name: &str| -> Result<usize> {
        match v.as_slice() {
            [x] if *x >= 0.0 && x.fract() == 0.0 => Ok(*x as usize),
            _ => Err(AfeError::Checkpoint(format!("config/{name} is malformed"))),
        }
    };
    let frames = one(take("frames")?, "frames")?;
    let joints = one(take("joints")?, "joints")?;
    let classes = one(take("classes")?, "classes")?;
    let channels = take("channels")?;
    let fc_hidden = one(take("fc_hidden")?, "fc_hidden")?;
    let head_hidden = one(take("head_hidden")?, "head_hidden")?;
    let padding = one(take("padding")?, "padding")?;
    let flags = take("flags")?;
    let parents = take("parents")?;
    let slope = take("leaky_slope")?;
    if channels.len() != 3 || flags.len() != 5 || parents.len() != joints || slope.len() != 1 {
        return Err(AfeError::Checkpoint("config entries have wrong lengths".into()));
    }
    let parents: Vec<Option<usize>> = parents
        .iter()
        .map(|&p| (p >= 0.0).then_some(p as usize))
        .collect();
    let topology = Topology::from_parents(&parents).map_err(|e| AfeError::Checkpoint(e.to_string()))?;
    Ok(ModelConfig {
        frames,
        topology,
        classes,
        channels: [channels[0] as usize, channels[1] as usize, channels[2] as usize],
        fc_hidden,
        head_hidden,
        padding,
        leaky_slope: slope[0],
        flags: AblationFlags::from_array([0, 1, 2, 3, 4].map(|i| flags[i] != 0.0)),
    })
}

pub fn parse_checkpoint(buf: &[u8]) -> Result<ModelParams<f32>> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(4).map_err(|_| AfeError::Checkpoint("bad magic".into()))? != MAGIC {
        return Err(AfeError::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(AfeError::Checkpoint(format!(
            "unsupported checkpoint version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let count = r.u32()?;
    let mut entries = IndexMap::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| AfeError::Checkpoint("entry name is not utf-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(4).ok_or_else(|| AfeError::Checkpoint("entry too large".into()))?)?;
        let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        let t = Tensor::new(&shape, data).map_err(|e| AfeError::Checkpoint(format!("entry {name}: {e}")))?;
        if entries.insert(name.clone(), t).is_some() {
            return Err(AfeError::Checkpoint(format!("duplicate entry {name}")));
        }
    }
    if r.pos != buf.len() {
        return Err(AfeError::Checkpoint("trailing bytes after last entry".into()));
    }
    let config = config_from(&mut entries)?;
    ModelParams::from_tensors(config, entries).map_err(|e| AfeError::Checkpoint(e.to_string()))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelParams<f32>> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| AfeError::io(path, e))?;
    parse_checkpoint(&buf)
}
