//! Versioned binary array container used for checkpoints, latents and `w0`.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "ISTYARR\0" | version u32 | count u32
//! count x { name_len u32 | name | dtype u8 | ndim u32 | dims u64* | offset u64 | nbytes u64 }
//! payload (arrays back to back, offsets relative to payload start)
//! sha256 of everything above (32 bytes)
//! ```
//!
//! Entries are stored in name order, so saving the same contents always
//! produces the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use interestyle_core::Tensor;
use sha2::{Digest, Sha256};

use crate::error::{format_err, Result};
use crate::fsutil::{atomic_write, read};

pub const MAGIC: &[u8; 8] = b"ISTYARR\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum Array {
    F64 { dims: Vec<usize>, data: Vec<f64> },
    U64 { dims: Vec<usize>, data: Vec<u64> },
    U8 { dims: Vec<usize>, data: Vec<u8> },
}

impl Array {
    fn dtype(&self) -> u8 {
        match self {
            Array::F64 { .. } => 0,
            Array::U64 { .. } => 1,
            Array::U8 { .. } => 2,
        }
    }

    pub fn dims(&self) -> &[usize] {
        match self {
            Array::F64 { dims, .. } | Array::U64 { dims, .. } | Array::U8 { dims, .. } => dims,
        }
    }

    fn payload(&self) -> Vec<u8> {
        match self {
            Array::F64 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            Array::U64 { data, .. } => data.iter().flat_map(|v| v.to_le_bytes()).collect(),
            Array::U8 { data, .. } => data.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ArrayContainer {
    pub entries: BTreeMap<String, Array>,
}

impl ArrayContainer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert_tensor(&mut self, name: impl Into<String>, t: &Tensor) {
        self.entries.insert(
            name.into(),
            Array::F64 {
                dims: t.dims().to_vec(),
                data: t.data().to_vec(),
            },
        );
    }

    pub fn insert_u64(&mut self, name: impl Into<String>, v: u64) {
        self.entries.insert(name.into(), Array::U64 { dims: vec![1], data: vec![v] });
    }

    pub fn insert_bytes(&mut self, name: impl Into<String>, bytes: &[u8]) {
        self.entries.insert(
            name.into(),
            Array::U8 {
                dims: vec![bytes.len()],
                data: bytes.to_vec(),
            },
        );
    }

    pub fn tensor(&self, name: &str) -> Option<Tensor> {
        match self.entries.get(name)? {
            Array::F64 { dims, data } => Tensor::from_vec(dims, data.clone()).ok(),
            _ => None,
        }
    }

    pub fn u64(&self, name: &str) -> Option<u64> {
        match self.entries.get(name)? {
            Array::U64 { data, .. } if data.len() == 1 => Some(data[0]),
            _ => None,
        }
    }

    pub fn bytes(&self, name: &str) -> Option<&[u8]> {
        match self.entries.get(name)? {
            Array::U8 { data, .. } => Some(data),
            _ => None,
        }
    }

    /// Tensors whose names start with `prefix/`, keyed by the remainder.
    pub fn tensors_under(&self, prefix: &str) -> BTreeMap<String, Tensor> {
        let p = format!("{prefix}/");
        self.entries
            .keys()
            .filter_map(|k| k.strip_prefix(&p).map(|rest| (rest.to_string(), self.tensor(k))))
            .filter_map(|(k, t)| t.map(|t| (k, t)))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut header = Vec::new();
        header.extend_from_slice(MAGIC);
        header.extend_from_slice(&VERSION.to_le_bytes());
        header.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        let mut payload = Vec::new();
        for (name, arr) in &self.entries {
            let bytes = arr.payload();
            header.extend_from_slice(&(name.len() as u32).to_le_bytes());
            header.extend_from_slice(name.as_bytes());
            header.push(arr.dtype());
            header.extend_from_slice(&(arr.dims().len() as u32).to_le_bytes());
            for &d in arr.dims() {
                header.extend_from_slice(&(d as u64).to_le_bytes());
            }
            header.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            header.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
            payload.extend_from_slice(&bytes);
        }
        header.extend_from_slice(&payload);
        let digest = Sha256::digest(&header);
        header.extend_from_slice(&digest);
        header
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |m: &str| format_err(origin, format!("corrupt container: {m}"));
        if bytes.len() < MAGIC.len() + 8 + 32 {
            return Err(bad("too short"));
        }
        let (body, trailer) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != trailer {
            return Err(bad("checksum mismatch"));
        }
        if &body[..8] != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32().ok_or_else(|| bad("truncated header"))?;
        if version != VERSION {
            return Err(format_err(origin, format!("unsupported container version {version}")));
        }
        let count = r.u32().ok_or_else(|| bad("truncated header"))? as usize;
        let mut index = Vec::with_capacity(count);
        for _ in 0..count {
            let parse = |r: &mut Reader| -> Option<(String, u8, Vec<usize>, usize, usize)> {
                let len = r.u32()? as usize;
                let name = String::from_utf8(r.take(len)?.to_vec()).ok()?;
                let dtype = r.take(1)?[0];
                let ndim = r.u32()? as usize;
                let dims = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Option<Vec<_>>>()?;
                Some((name, dtype, dims, r.u64()? as usize, r.u64()? as usize))
            };
            index.push(parse(&mut r).ok_or_else(|| bad("truncated index"))?);
        }
        let payload = &body[r.pos..];
        let mut entries = BTreeMap::new();
        for (name, dtype, dims, offset, nbytes) in index {
            let raw = offset
                .checked_add(nbytes)
                .and_then(|end| payload.get(offset..end))
                .ok_or_else(|| bad("array out of bounds"))?;
            let numel: usize = dims.iter().product();
            let arr = match dtype {
                0 if nbytes == numel * 8 => Array::F64 {
                    dims,
                    data: raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                },
                1 if nbytes == numel * 8 => Array::U64 {
                    dims,
                    data: raw.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect(),
                },
                2 if nbytes == numel => Array::U8 { dims, data: raw.to_vec() },
                _ => return Err(bad(&format!("entry {name:?} has bad dtype or size"))),
            };
            if entries.insert(name.clone(), arr).is_some() {
                return Err(bad(&format!("duplicate entry {name:?}")));
            }
        }
        Ok(ArrayContainer { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&read(path)?, path)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        Some(u32::from_le_bytes(self.take(4)?.try_into().ok()?))
    }

    fn u64(&mut self) -> Option<u64> {
        Some(u64::from_le_bytes(self.take(8)?.try_into().ok()?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ArrayContainer {
        let mut c = ArrayContainer::new();
        c.insert_tensor("b/w", &Tensor::from_vec(&[2, 3], vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE, 0.0, 1e300]).unwrap());
        c.insert_tensor("a", &Tensor::scalar(0.25));
        c.insert_u64("step", 42);
        c.insert_bytes("config_json", b"{\"k\":1}");
        c
    }

    #[test]
    fn round_trip_is_byte_identical() {
        let c = sample();
        let bytes = c.to_bytes();
        let back = ArrayContainer::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.u64("step"), Some(42));
        assert_eq!(back.bytes("config_json"), Some(&b"{\"k\":1}"[..]));
        assert_eq!(back.tensors_under("b").len(), 1);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[20] ^= 1;
        assert!(ArrayContainer::from_bytes(&bytes, Path::new("mem")).is_err());
        assert!(ArrayContainer::from_bytes(&bytes[..10], Path::new("mem")).is_err());
    }
}
