//! Versioned binary checkpoint format.
//!
//! Layout (all integers little-endian):
//!
//! | field   | bytes                                   |
//! |---------|-----------------------------------------|
//! | magic   | `b"GTXCKPT\0"`                          |
//! | version | `u32`                                   |
//! | dtype   | `u8` (4 = f32, 8 = f64)                 |
//! | count   | `u32` number of tensors                 |
//!
//! followed by `count` records of `name_len: u32`, UTF-8 name, `ndim: u32`,
//! `ndim × u64` dimensions and the raw little-endian element data in
//! row-major order.

use std::path::Path;

use crate::{Error, Float, Matrix, Result};

pub const MAGIC: &[u8; 8] = b"GTXCKPT\0";
pub const VERSION: u32 = 1;

pub fn encode<F: Float>(tensors: &[(String, &Matrix<F>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(F::DTYPE);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, m) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&2u32.to_le_bytes());
        for d in m.shape() {
            out.extend_from_slice(&(*d as u64).to_le_bytes());
        }
        for v in m.iter() {
            v.write_le(&mut out);
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!(
                "truncated at byte {} (wanted {n} more)",
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decodes a checkpoint, converting elements to `F` if the stored precision
/// differs.
pub fn decode<F: Float>(bytes: &[u8]) -> Result<Vec<(String, Matrix<F>)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "checkpoint version {version} is not supported (expected {VERSION})"
        )));
    }
    let dtype = r.take(1)?[0];
    if dtype != 4 && dtype != 8 {
        return Err(Error::Checkpoint(format!("unknown dtype tag {dtype}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let ndim = r.u32()? as usize;
        let dims = (0..ndim)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let (rows, cols) = match dims.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            _ => return Err(Error::Checkpoint(format!("{name}: unsupported rank {ndim}"))),
        };
        let raw = r.take(rows * cols * dtype as usize)?;
        let data: Vec<F> = raw
            .chunks_exact(dtype as usize)
            .map(|c| {
                if dtype == 4 {
                    F::from_f64(f32::read_le(c) as f64)
                } else {
                    F::from_f64(f64::read_le(c))
                }
            })
            .collect();
        out.push((name, Matrix::from_shape_vec((rows, cols), data).unwrap()));
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint("trailing bytes after last tensor".into()));
    }
    Ok(out)
}

pub fn save<F: Float>(path: impl AsRef<Path>, tensors: &[(String, &Matrix<F>)]) -> Result<()> {
    std::fs::write(path, encode(tensors))?;
    Ok(())
}

pub fn load<F: Float>(path: impl AsRef<Path>) -> Result<Vec<(String, Matrix<F>)>> {
    decode(&std::fs::read(path)?)
}
