//! `SMAP` tensor container.
//!
//! Layout (little-endian throughout):
//!
//! ```text
//! "SMAP" | u8 version = 1 | u8 dtype (0 = f32) | u16 ndim | ndim x u32 dims | f32 payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: [u8; 4] = *b"SMAP";
pub const VERSION: u8 = 1;
pub const DTYPE_F32: u8 = 0;

pub fn encode(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(DTYPE_F32);
    out.extend_from_slice(&(t.rank() as u16).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn take<'a>(buf: &mut &'a [u8], n: usize) -> Result<&'a [u8]> {
    if buf.len() < n {
        return Err(Error::Format("truncated SMAP stream".into()));
    }
    let (head, tail) = buf.split_at(n);
    *buf = tail;
    Ok(head)
}

pub fn decode(bytes: &[u8]) -> Result<Tensor<f32>> {
    let mut buf = bytes;
    if take(&mut buf, 4)? != MAGIC {
        return Err(Error::Format("bad SMAP magic".into()));
    }
    let head = take(&mut buf, 2)?;
    if head[0] != VERSION {
        return Err(Error::Format(format!("unsupported SMAP version {}", head[0])));
    }
    if head[1] != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported SMAP dtype {}", head[1])));
    }
    let ndim = u16::from_le_bytes(take(&mut buf, 2)?.try_into().unwrap()) as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(u32::from_le_bytes(take(&mut buf, 4)?.try_into().unwrap()) as usize);
    }
    let n: usize = shape.iter().product();
    if buf.len() != 4 * n {
        return Err(Error::Format(format!("SMAP payload is {} bytes, shape {shape:?} needs {}", buf.len(), 4 * n)));
    }
    let data = buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))
}

pub fn write(path: &Path, t: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
