//! Binary checkpoints.
//!
//! ```text
//! "FSCK" | version u16 LE = 1
//! meta:  config_hash u64 | round u32 | parameter_count u64 | seed u64 | tensor_count u32
//! per tensor, in name order:
//!        name_len u16 | name (UTF-8) | rank u8 | dims u32 × rank | values f64 × product(dims)
//! ```
//!
//! All integers and floats are little-endian. Values are stored as `f64`, so
//! a round trip is bitwise.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::params::ModelParams;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FSCK";
pub const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub config_hash: u64,
    pub round: u32,
    pub parameter_count: u64,
    pub seed: u64,
}

pub fn encode_checkpoint(params: &ModelParams, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    if meta.parameter_count != params.parameter_count() as u64 {
        return Err(Error::contract(format!(
            "meta declares {} parameters, params hold {}",
            meta.parameter_count,
            params.parameter_count()
        )));
    }
    let mut out = Vec::with_capacity(38 + 8 * params.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&meta.config_hash.to_le_bytes());
    out.extend_from_slice(&meta.round.to_le_bytes());
    out.extend_from_slice(&meta.parameter_count.to_le_bytes());
    out.extend_from_slice(&meta.seed.to_le_bytes());
    let count = u32::try_from(params.len()).map_err(|_| Error::contract("too many tensors"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, t) in params.iter() {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::contract(format!("parameter name `{name}` longer than 65535 bytes")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let rank = u8::try_from(t.rank()).map_err(|_| Error::contract("tensor rank exceeds 255"))?;
        out.push(rank);
        for &d in t.shape() {
            let d = u32::try_from(d).map_err(|_| Error::contract("dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&end| end <= self.bytes.len()) {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(
                self.bytes.len() as u64,
                format!("truncated {what}: need {n} bytes at offset {}", self.pos),
            )),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().expect("length checked"))
    }
}

/// Decode without checking the config hash.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelParams, CheckpointMeta)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(0, "bad magic, expected \"FSCK\""));
    }
    let version = u16::from_le_bytes(r.array("version")?);
    if version != VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let meta = CheckpointMeta {
        config_hash: u64::from_le_bytes(r.array("meta")?),
        round: u32::from_le_bytes(r.array("meta")?),
        parameter_count: u64::from_le_bytes(r.array("meta")?),
        seed: u64::from_le_bytes(r.array("meta")?),
    };
    let tensors = u32::from_le_bytes(r.array("meta")?);

    let mut params = ModelParams::new();
    let mut total: u64 = 0;
    for _ in 0..tensors {
        let at = r.pos as u64;
        let len = usize::from(u16::from_le_bytes(r.array("name length")?));
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(at + 2, "parameter name is not UTF-8"))?
            .to_string();
        let rank = usize::from(r.take(1, "rank")?[0]);
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let dim_at = r.pos as u64;
            let d = u32::from_le_bytes(r.array("dims")?) as usize;
            if d == 0 {
                return Err(Error::format(dim_at, format!("zero dimension in `{name}`")));
            }
            shape.push(d);
        }
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&c| c.checked_mul(8).is_some())
            .ok_or_else(|| Error::format(at, format!("dimensions of `{name}` overflow")))?;
        let raw = r.take(count * 8, "tensor payload")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(&shape, data).map_err(|e| Error::format(at, e.to_string()))?;
        total += count as u64;
        if params.insert(name.clone(), tensor).is_some() {
            return Err(Error::format(at, format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos as u64, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if total != meta.parameter_count {
        return Err(Error::format(
            18,
            format!("meta declares {} parameters, tensors hold {total}", meta.parameter_count),
        ));
    }
    Ok((params, meta))
}

pub fn save_checkpoint(params: &ModelParams, meta: &CheckpointMeta, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(params, meta)?)?;
    Ok(())
}

/// Load and verify that the checkpoint was written for `expected_config_hash`.
pub fn load_checkpoint(path: impl AsRef<Path>, expected_config_hash: u64) -> Result<(ModelParams, CheckpointMeta)> {
    let (params, meta) = decode_checkpoint(&fs::read(path)?)?;
    if meta.config_hash != expected_config_hash {
        return Err(Error::ConfigHashMismatch {
            expected: expected_config_hash,
            found: meta.config_hash,
        });
    }
    Ok((params, meta))
}
