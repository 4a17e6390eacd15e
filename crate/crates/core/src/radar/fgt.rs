//! `FGT1` tensor files.
//!
//! ```text
//! 0..4   magic "FGT1"
//! 4      dtype: 1 = f32 LE, 2 = f64 LE
//! 5      rank r (<= 8)
//! 6..    r x u32 LE extents
//! ..     row-major payload
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::Tensor;

pub const MAGIC: &[u8; 4] = b"FGT1";
pub const MAX_RANK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dtype {
    F32 = 1,
    F64 = 2,
}

impl Dtype {
    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

pub fn encode(t: &Tensor, dtype: Dtype) -> Result<Vec<u8>> {
    if t.rank() > MAX_RANK {
        return Err(Error::Format { offset: 5, msg: format!("rank {} exceeds {MAX_RANK}", t.rank()) });
    }
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + t.len() * dtype.width());
    out.extend_from_slice(MAGIC);
    out.push(dtype as u8);
    out.push(t.rank() as u8);
    for &e in t.shape() {
        let e = u32::try_from(e)
            .map_err(|_| Error::Format { offset: out.len() as u64, msg: format!("extent {e} exceeds u32") })?;
        out.extend_from_slice(&e.to_le_bytes());
    }
    match dtype {
        Dtype::F32 => t.data().iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64 => t.data().iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor> {
    let err = |offset: usize, msg: String| Error::Format { offset: offset as u64, msg };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(err(0, "bad magic, expected FGT1".into()));
    }
    let dtype = match bytes.get(4) {
        Some(1) => Dtype::F32,
        Some(2) => Dtype::F64,
        Some(c) => return Err(err(4, format!("unknown dtype code {c}"))),
        None => return Err(err(4, "truncated header".into())),
    };
    let rank = *bytes.get(5).ok_or_else(|| err(5, "truncated header".into()))? as usize;
    if rank > MAX_RANK {
        return Err(err(5, format!("rank {rank} exceeds {MAX_RANK}")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let off = 6 + 4 * i;
        let raw = bytes.get(off..off + 4).ok_or_else(|| err(off, "truncated extents".into()))?;
        let e = u32::from_le_bytes(raw.try_into().unwrap()) as usize;
        count = count
            .checked_mul(e)
            .ok_or_else(|| err(off, "element count overflows".into()))?;
        shape.push(e);
    }
    let start = 6 + 4 * rank;
    let payload_len = count
        .checked_mul(dtype.width())
        .ok_or_else(|| err(6, "payload size overflows".into()))?;
    let available = bytes.len() - start;
    if available < payload_len {
        return Err(err(bytes.len(), format!("truncated payload: need {payload_len} bytes, have {available}")));
    }
    if available > payload_len {
        return Err(err(start + payload_len, format!("{} trailing bytes", available - payload_len)));
    }
    let payload = &bytes[start..];
    let data = match dtype {
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Tensor::new(shape, data)
}

/// Writes `t` in 64-bit precision.
pub fn write_tensor_file(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_tensor_file_as(path, t, Dtype::F64)
}

pub fn write_tensor_file_as(path: impl AsRef<Path>, t: &Tensor, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode(t, dtype)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
