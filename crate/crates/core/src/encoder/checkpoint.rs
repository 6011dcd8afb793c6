//! Binary checkpoint container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic        4 bytes  "CVUL"
//! version      u32
//! vocab_size   u32
//! d_embed      u32
//! d            u32
//! max_seq_len  u32
//! dropout_rate f64
//! token_table  f64 × vocab_size·d_embed   (row-major)
//! projector    f64 × d_embed·d            (row-major)
//! bias         f64 × d
//! has_head     u8
//! [head weights f64 × d·2, head bias f64 × 2]   when has_head = 1
//! checksum     u64   FNV-1a of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use super::{EncoderConfig, EncoderError, EncoderModel};
use crate::seed::fnv1a;
use crate::trainer::ClassifierHead;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"CVUL";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: EncoderModel,
    pub head: Option<ClassifierHead>,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), EncoderError> {
    fs::write(path, encode(checkpoint))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, EncoderError> {
    decode(&fs::read(path)?)
}

fn encode(ck: &Checkpoint) -> Vec<u8> {
    let cfg = ck.model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    for v in [
        CHECKPOINT_VERSION,
        cfg.vocab_size,
        cfg.d_embed as u32,
        cfg.d as u32,
        cfg.max_sequence_length as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&cfg.dropout_rate.to_le_bytes());
    for part in ck.model.parameters() {
        part.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
    }
    match &ck.head {
        Some(head) => {
            out.push(1);
            head.weights()
                .iter()
                .chain(head.bias())
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        None => out.push(0),
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], EncoderError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| EncoderError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, EncoderError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, EncoderError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, EncoderError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| {
            EncoderError::CorruptCheckpoint("parameter count overflows".into())
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

fn decode(bytes: &[u8]) -> Result<Checkpoint, EncoderError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(EncoderError::CorruptCheckpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(EncoderError::VersionMismatch {
            expected: CHECKPOINT_VERSION,
            found: version,
        });
    }
    let config = EncoderConfig {
        vocab_size: r.u32()?,
        d_embed: r.u32()? as usize,
        d: r.u32()? as usize,
        max_sequence_length: r.u32()? as usize,
        dropout_rate: r.f64()?,
    };
    config
        .validate()
        .map_err(|e| EncoderError::CorruptCheckpoint(format!("bad header: {e}")))?;
    let table = r.f64s(config.vocab_size as usize * config.d_embed)?;
    let projector = r.f64s(config.d_embed * config.d)?;
    let bias = r.f64s(config.d)?;
    let head = match r.take(1)?[0] {
        0 => None,
        1 => {
            let weights = r.f64s(config.d * 2)?;
            let hb = r.f64s(2)?;
            Some(ClassifierHead::from_parts(config.d, weights, hb).map_err(|e| {
                EncoderError::CorruptCheckpoint(format!("bad head: {e}"))
            })?)
        }
        other => return Err(EncoderError::CorruptCheckpoint(format!("bad head flag {other}"))),
    };
    let body_end = r.pos;
    let stored = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
    if r.pos != bytes.len() {
        return Err(EncoderError::CorruptCheckpoint("trailing bytes".into()));
    }
    if stored != fnv1a(&bytes[..body_end]) {
        return Err(EncoderError::CorruptCheckpoint("checksum mismatch".into()));
    }
    let model = EncoderModel::from_parts(config, table, projector, bias)
        .map_err(|e| EncoderError::CorruptCheckpoint(e.to_string()))?;
    Ok(Checkpoint { model, head })
}
