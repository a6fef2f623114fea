//! `JCK1` checkpoints: magic `JCK1`, `u32` length plus a JSON header
//! (`config` and `speakers`), `u32` tensor count, then per tensor a `u32`
//! name length, the UTF-8 name, `u32` rank, `u64` dimensions and the `f32`
//! little-endian values; last, a `u64` sum of every preceding byte after the
//! magic. All integers are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::diff::{DiffArray, Scalar};
use super::network::JointModel;
use crate::embeddings::byte_checksum;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"JCK1";

/// A model with the speaker labels its speaker head was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: JointModel<f32>,
    pub speakers: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    speakers: Vec<String>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn checkpoint_bytes<T: Scalar>(model: &JointModel<T>, speakers: &[String]) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        speakers: speakers.to_vec(),
    })
    .map_err(|e| fmt_err(e.to_string()))?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(model.tensors().len() as u32).to_le_bytes());
    for (name, t) in model.names().iter().zip(model.tensors()) {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.values {
            out.extend_from_slice(&v.to_f32().unwrap().to_le_bytes());
        }
    }
    let sum = byte_checksum(&out[4..]);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| fmt_err("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<usize> {
        usize::try_from(u64::from_le_bytes(self.take(8)?.try_into().unwrap())).map_err(|_| fmt_err("dimension overflow"))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 4 + 8 || &bytes[..4] != MAGIC {
        return Err(fmt_err("not a JCK1 checkpoint"));
    }
    let body = &bytes[..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().unwrap());
    if stored != byte_checksum(&body[4..]) {
        return Err(fmt_err("checkpoint checksum mismatch"));
    }
    let mut r = Reader { bytes: body, pos: 4 };
    let hlen = r.u32()?;
    let header: Header = serde_json::from_slice(r.take(hlen)?).map_err(|e| fmt_err(format!("bad checkpoint header: {e}")))?;
    header.config.validate()?;
    let template = JointModel::<f32>::init(header.config.clone(), 0)?;
    let count = r.u32()?;
    if count != template.tensors().len() {
        return Err(fmt_err(format!("checkpoint has {count} tensors, config implies {}", template.tensors().len())));
    }
    let mut names = Vec::with_capacity(count);
    let mut tensors = Vec::with_capacity(count);
    for (expect_name, expect) in template.names().iter().zip(template.tensors()) {
        let nlen = r.u32()?;
        let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| fmt_err("tensor name is not UTF-8"))?;
        let rank = r.u32()?;
        let shape = (0..rank).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        if name != expect_name || shape != expect.shape {
            return Err(fmt_err(format!("unexpected tensor {name} {shape:?}, wanted {expect_name} {:?}", expect.shape)));
        }
        let n: usize = shape.iter().product();
        let data = r.take(n * 4)?.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        names.push(name.to_string());
        tensors.push(DiffArray::new(shape, data)?);
    }
    if r.pos != body.len() {
        return Err(fmt_err("trailing bytes in checkpoint"));
    }
    Ok(Checkpoint {
        model: JointModel::from_parts(header.config, names, tensors)?,
        speakers: header.speakers,
    })
}

pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, model: &JointModel<T>, speakers: &[String]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_bytes(model, speakers)?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    parse_checkpoint(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Load and insist on a particular architecture.
pub fn load_checkpoint_as(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Checkpoint> {
    let ck = load_checkpoint(path)?;
    if &ck.model.config != expected {
        return Err(Error::Config(format!(
            "checkpoint holds {} layers of width {}, expected {} of width {}",
            ck.model.config.n_layers, ck.model.config.d_ff, expected.n_layers, expected.d_ff
        )));
    }
    Ok(ck)
}
