//! Binary checkpoint layout, all integers u64 little-endian:
//!
//! ```text
//! "EDLCKPT1" | len | descriptor (UTF-8) | n_arrays |
//!     per array: len | name | rank | dims... | f64 LE values
//! ```

use crate::{Error, Result};

use super::weights::WeightStore;
use super::{Model, ModelSpec};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"EDLCKPT1";

pub fn save_checkpoint(w: &WeightStore, spec: &ModelSpec) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let descriptor = format!("{}seed={}\n", spec.descriptor(), w.seed());
    put_bytes(&mut out, descriptor.as_bytes());
    out.extend_from_slice(&(w.tensors().len() as u64).to_le_bytes());
    for t in w.tensors() {
        put_bytes(&mut out, t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u64).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u64).to_le_bytes());
    out.extend_from_slice(b);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::Checkpoint(format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str) -> Result<usize> {
        let n = self.u64(what)?;
        let left = (self.buf.len() - self.pos) as u64;
        if n > left {
            return Err(Error::Checkpoint(format!("{what} length {n} exceeds the {left} remaining bytes")));
        }
        Ok(n as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.len(what)?;
        String::from_utf8(self.take(n, what)?.to_vec()).map_err(|_| Error::Checkpoint(format!("{what} is not UTF-8")))
    }
}

/// Decodes a checkpoint and checks every array against the layout implied by
/// its descriptor. Nothing is returned unless the whole file is valid.
pub fn load_checkpoint(bytes: &[u8]) -> Result<(WeightStore, ModelSpec)> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(8, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic, not an EDLCKPT1 file".into()));
    }
    let descriptor = c.string("descriptor")?;
    let spec = ModelSpec::from_descriptor(&descriptor)?;
    let seed = descriptor
        .lines()
        .find_map(|l| l.strip_prefix("seed="))
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(0);

    let count = c.u64("array count")?;
    let mut loaded = WeightStore::new(seed);
    for _ in 0..count {
        let name = c.string("array name")?;
        let rank = c.len("rank")?;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.len("dimension")?);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("{name}: shape overflows")))?;
        let raw = c.take(
            n.checked_mul(8).ok_or_else(|| Error::Checkpoint("array too large".into()))?,
            &name,
        )?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        loaded.add(&name, &shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
    }
    if c.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }

    let (_, mut expected) = Model::init(&spec, seed)?;
    expected
        .load_values(&loaded)
        .map_err(|e| Error::Checkpoint(format!("weights do not fit the descriptor: {e}")))?;
    Ok((expected, spec))
}
