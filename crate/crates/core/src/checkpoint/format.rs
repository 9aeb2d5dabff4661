//! Little-endian checkpoint file format:
//!
//! ```text
//! "SEGW" | u32 version | u32 meta_len | meta (UTF-8 key=value lines)
//! u32 tensor_count
//! per tensor: u16 name_len | name | u8 dtype | u8 rank | u32 extents[rank] | payload
//! u32 CRC32 of all preceding bytes
//! ```

use std::path::Path;

use super::{Checkpoint, Metadata};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, MAX_RANK};

pub const MAGIC: &[u8; 4] = b"SEGW";
pub const VERSION: u32 = 1;

pub fn encode<S: Scalar>(ckpt: &Checkpoint<S>) -> Vec<u8> {
    let meta = ckpt.metadata.to_text();
    let payload: usize = ckpt.iter().map(|(_, t)| t.len() * S::BYTES).sum();
    let mut out = Vec::with_capacity(16 + meta.len() + payload + 64 * ckpt.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
    out.extend_from_slice(meta.as_bytes());
    out.extend_from_slice(&(ckpt.len() as u32).to_le_bytes());
    for (name, t) in ckpt.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(S::DTYPE);
        out.push(t.rank() as u8);
        for &e in t.shape() {
            out.extend_from_slice(&(e as u32).to_le_bytes());
        }
        for &v in t.data() {
            v.write_le(&mut out);
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos,
                msg: format!("truncated while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn fail(&self, offset: usize, msg: impl Into<String>) -> Error {
        Error::Format {
            offset,
            msg: msg.into(),
        }
    }
}

fn read_values<S: Scalar, T: Scalar>(bytes: &[u8]) -> Vec<S> {
    if S::DTYPE == T::DTYPE {
        return bytes.chunks_exact(S::BYTES).map(S::read_le).collect();
    }
    bytes
        .chunks_exact(T::BYTES)
        .map(|c| S::lit(T::read_le(c).as_f64()))
        .collect()
}

/// Parses a checkpoint image. Stored `f32`/`f64` payloads are converted to `S`.
pub fn decode<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(r.fail(0, "bad magic, expected SEGW"));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail(4, format!("unsupported version {version}")));
    }
    if bytes.len() < 4 || bytes.len() - 4 < r.pos {
        return Err(r.fail(bytes.len(), "truncated before checksum"));
    }
    let body_end = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_end..].try_into().expect("4 bytes"));
    let mut ckpt = Checkpoint::new();
    // Parse within the body so that a short file reports the field it cut.
    let mut r = Reader {
        buf: &bytes[..body_end],
        pos: r.pos,
    };
    let meta_len = r.u32("metadata length")? as usize;
    let meta_at = r.pos;
    let meta = std::str::from_utf8(r.take(meta_len, "metadata")?)
        .map_err(|_| r.fail(meta_at, "metadata is not UTF-8"))?;
    ckpt.metadata = Metadata::from_text(meta).map_err(|e| r.fail(meta_at, e.to_string()))?;
    let count = r.u32("tensor count")?;
    for i in 0..count {
        let at = r.pos;
        let name_len = r.u16("name length")? as usize;
        let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
            .map_err(|_| r.fail(at, format!("tensor {i} name is not UTF-8")))?
            .to_string();
        let dtype_at = r.pos;
        let dtype = r.u8("dtype")?;
        let rank = r.u8("rank")? as usize;
        if rank == 0 || rank > MAX_RANK {
            return Err(r.fail(dtype_at + 1, format!("tensor `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let n: usize = shape.iter().product();
        let data_at = r.pos;
        let data = match dtype {
            0 => read_values::<S, f32>(r.take(n * 4, "tensor payload")?),
            1 => read_values::<S, f64>(r.take(n * 8, "tensor payload")?),
            d => return Err(r.fail(dtype_at, format!("unknown dtype {d}"))),
        };
        let t = Tensor::from_vec(&shape, data).map_err(|e| r.fail(data_at, e.to_string()))?;
        ckpt.push(name, t).map_err(|e| r.fail(at, e.to_string()))?;
    }
    if r.pos != body_end {
        return Err(r.fail(r.pos, "trailing bytes before checksum"));
    }
    let actual = crc32fast::hash(&bytes[..body_end]);
    if actual != stored {
        return Err(r.fail(body_end, format!("CRC mismatch: stored {stored:08x}, computed {actual:08x}")));
    }
    Ok(ckpt)
}

pub fn save<S: Scalar>(ckpt: &Checkpoint<S>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(ckpt)).map_err(|e| Error::io(path, e))
}

pub fn load<S: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<S>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
