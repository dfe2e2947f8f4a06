//! `RCVW` parameter checkpoints.
//!
//! Layout (little-endian): magic `RCVW`, version `u32`, then until EOF one
//! record per tensor: name length `u32`, UTF-8 name, rank `u32`, `rank`
//! dims as `u32`, and `prod(dims)` `f32` values.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"RCVW";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub dims: Vec<usize>,
    pub values: Vec<f32>,
}

pub fn encode_checkpoint(tensors: &[NamedTensor]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
        for &d in &t.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                "RCVW",
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedTensor>> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    if cur.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::format("RCVW", "bad magic"));
    }
    let version = cur.u32("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format("RCVW", format!("unsupported version {version}")));
    }
    let mut tensors = Vec::new();
    while cur.pos < bytes.len() {
        let name_len = cur.u32("name length")? as usize;
        let name = std::str::from_utf8(cur.take(name_len, "name")?)
            .map_err(|_| Error::format("RCVW", "tensor name is not UTF-8"))?
            .to_string();
        let rank = cur.u32("rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(cur.u32("dims")? as usize);
        }
        let count: usize = dims.iter().product();
        let payload = cur.take(count * 4, &format!("payload of `{name}`"))?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push(NamedTensor { name, dims, values });
    }
    Ok(tensors)
}

pub fn write_checkpoint(path: &Path, tensors: &[NamedTensor]) -> Result<()> {
    fs::write(path, encode_checkpoint(tensors)).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<NamedTensor>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            raw in proptest::collection::vec((any::<u32>(), 1usize..5, 1usize..4), 0..4)
        ) {
            let tensors: Vec<NamedTensor> = raw
                .iter()
                .enumerate()
                .map(|(i, &(bits, a, b))| NamedTensor {
                    name: format!("layer.{i}.weight"),
                    dims: vec![a, b],
                    values: (0..a * b).map(|j| f32::from_bits(bits.wrapping_add(j as u32) & 0x7f7f_ffff)).collect(),
                })
                .collect();
            let bytes = encode_checkpoint(&tensors);
            let back = decode_checkpoint(&bytes).unwrap();
            prop_assert_eq!(back.len(), tensors.len());
            for (x, y) in back.iter().zip(&tensors) {
                prop_assert_eq!(&x.name, &y.name);
                prop_assert_eq!(&x.dims, &y.dims);
                let xb: Vec<u32> = x.values.iter().map(|v| v.to_bits()).collect();
                let yb: Vec<u32> = y.values.iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(xb, yb);
            }
            prop_assert_eq!(encode_checkpoint(&back), bytes);
        }
    }

    #[test]
    fn rejects_bad_magic_and_truncation() {
        let t = NamedTensor {
            name: "w".into(),
            dims: vec![2],
            values: vec![1.0, 2.0],
        };
        let bytes = encode_checkpoint(&[t]);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut wrong_version = bytes;
        wrong_version[4] = 9;
        assert!(decode_checkpoint(&wrong_version).is_err());
    }
}
