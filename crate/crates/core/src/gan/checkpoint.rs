//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "RCTG"  u32 version  u64 seed
//! u64 len + schema text   u64 len + config text
//! u32 block count, then per block:
//!     u32 len + name   u8 kind (0 param, 1 buffer)   u64 rows   u64 cols   rows*cols f64
//! ```
//!
//! Blocks are written in name order so equal models give equal bytes.

use std::collections::BTreeMap;
use std::path::Path;

use super::config::GanConfig;
use super::model::Synthesizer;
use super::nets::{Params, CLASSIFIER, CRITIC, GENERATOR};
use crate::atomic::write_atomic;
use crate::codec::TableSchema;
use crate::error::{Error, Result};
use crate::grad::{ParamSet, Tensor2};

pub const MAGIC: &[u8; 4] = b"RCTG";
pub const VERSION: u32 = 1;

const KIND_PARAM: u8 = 0;
const KIND_BUFFER: u8 = 1;

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_block(out: &mut Vec<u8>, name: &str, kind: u8, t: &Tensor2) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    out.push(kind);
    put_u64(out, t.rows() as u64);
    put_u64(out, t.cols() as u64);
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn to_bytes(model: &Synthesizer) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u64(&mut out, model.seed());
    for text in [model.schema().to_text(), model.config().to_text()] {
        put_u64(&mut out, text.len() as u64);
        out.extend_from_slice(text.as_bytes());
    }
    let p = model.params();
    let mut blocks: BTreeMap<&str, (u8, &Tensor2)> = BTreeMap::new();
    for ps in [Some(&p.generator), Some(&p.critic), p.classifier.as_ref()].into_iter().flatten() {
        for (k, t) in ps.blocks() {
            blocks.insert(k, (KIND_PARAM, t));
        }
        for (k, t) in ps.buffers() {
            blocks.insert(k, (KIND_BUFFER, t));
        }
    }
    put_u32(&mut out, blocks.len() as u32);
    for (name, (kind, t)) in blocks {
        put_block(&mut out, name, kind, t);
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self, wide: bool) -> Result<usize> {
        let n = if wide { self.u64()? } else { u64::from(self.u32()?) };
        let n = usize::try_from(n).map_err(|_| Error::Checkpoint("length overflow".into()))?;
        if n > self.bytes.len() - self.pos {
            return Err(Error::Checkpoint(format!("length {n} runs past end of file")));
        }
        Ok(n)
    }

    fn text(&mut self, wide: bool) -> Result<String> {
        let n = self.len(wide)?;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("text section is not UTF-8".into()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Synthesizer> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let seed = r.u64()?;
    let schema = TableSchema::from_text(&r.text(true)?)?;
    let config = GanConfig::from_text(&r.text(true)?)?;

    let mut generator = ParamSet::new();
    let mut critic = ParamSet::new();
    let mut classifier = ParamSet::new();
    let count = r.u32()?;
    for _ in 0..count {
        let name = r.text(false)?;
        let kind = r.u8()?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let n = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Checkpoint(format!("block {name} too large")))?;
        let raw = r.take(n)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor2::from_vec(rows, cols, data)?;
        let owner = match name.split('.').next() {
            Some(GENERATOR) => &mut generator,
            Some(CRITIC) => &mut critic,
            Some(CLASSIFIER) => &mut classifier,
            _ => return Err(Error::Checkpoint(format!("block {name} has no owner network"))),
        };
        match kind {
            KIND_PARAM => owner.insert(name, t),
            KIND_BUFFER => owner.insert_buffer(name, t),
            k => return Err(Error::Checkpoint(format!("block {name} has unknown kind {k}"))),
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    let params = Params {
        generator,
        critic,
        classifier: (!classifier.is_empty()).then_some(classifier),
    };
    Synthesizer::from_parts(config, schema, params, seed)
}

pub fn save(model: &Synthesizer, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path, &to_bytes(model))
}

pub fn load(path: impl AsRef<Path>) -> Result<Synthesizer> {
    from_bytes(&std::fs::read(path)?)
}
