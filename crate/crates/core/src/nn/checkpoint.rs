//! Versioned binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "RPRAECKP"
//! version  u32
//! header   u32 length + UTF-8 `key=value` lines
//! count    u32 parameter records, each:
//!            u16 id length, id bytes, u8 group tag,
//!            u8 rank, u32 per dimension, f64 per value
//! state    u64 length + opaque bytes (empty when absent)
//! ```
//!
//! The reader rejects unknown versions, truncation and trailing bytes.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{Group, ParamStore, Tensor};

pub const MAGIC: &[u8; 8] = b"RPRAECKP";
pub const FORMAT_VERSION: u32 = 1;

/// Ordered `key=value` metadata block.
pub type Header = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: Header,
    pub params: ParamStore,
    pub state: Vec<u8>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let mut header = String::new();
        for (k, v) in &self.header {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::Internal(format!("header entry `{k}` cannot be encoded")));
            }
            header.push_str(k);
            header.push('=');
            header.push_str(v);
            header.push('\n');
        }
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(header.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (_, p) in self.params.iter() {
            let id = p.id().as_bytes();
            out.extend_from_slice(&(id.len() as u16).to_le_bytes());
            out.extend_from_slice(id);
            out.push(p.group().tag());
            out.push(p.tensor.shape().len() as u8);
            for &d in p.tensor.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&p.tensor.to_le_bytes());
        }
        out.extend_from_slice(&(self.state.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.state);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Corrupt("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Corrupt(format!("unsupported checkpoint version {version}")));
        }
        let header_len = r.u32()? as usize;
        let header_text = std::str::from_utf8(r.take(header_len)?)
            .map_err(|_| Error::Corrupt("checkpoint header is not UTF-8".into()))?;
        let mut header = Header::new();
        for line in header_text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Corrupt(format!("bad header line `{line}`")))?;
            header.insert(k.to_string(), v.to_string());
        }
        let count = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let id_len = r.u16()? as usize;
            let id = std::str::from_utf8(r.take(id_len)?)
                .map_err(|_| Error::Corrupt("parameter id is not UTF-8".into()))?
                .to_string();
            let tag = r.u8()?;
            let group = Group::from_tag(tag).ok_or_else(|| Error::Corrupt(format!("unknown group tag {tag}")))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Corrupt("parameter too large".into()))?)?;
            let values = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            let tensor = Tensor::new(shape, values).map_err(|e| Error::Corrupt(e.to_string()))?;
            params.register(id, group, tensor).map_err(|e| Error::Corrupt(e.to_string()))?;
        }
        let state_len = r.u64()? as usize;
        let state = r.take(state_len)?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes after checkpoint".into()));
        }
        Ok(Self { header, params, state })
    }
}

/// Little-endian cursor over a byte slice. Also used for the training-state blob.
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt("unexpected end of data".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn is_done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut params = ParamStore::new();
        params.register("a.w", Group::Rae, Tensor::new(vec![2, 2], vec![1.0, -0.5, 1e-300, 3.25]).unwrap()).unwrap();
        params.register("r.b", Group::Retrofit, Tensor::vector(vec![f64::MIN_POSITIVE])).unwrap();
        params.register("emb", Group::Frozen, Tensor::new(vec![1, 3], vec![0.0, 1.0, 2.0]).unwrap()).unwrap();
        let mut header = Header::new();
        header.insert("hidden_dim".into(), "32".into());
        Checkpoint { header, params, state: vec![9, 8, 7] }
    }

    #[test]
    fn round_trips_exactly() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(Checkpoint::from_bytes(&bytes).unwrap(), ck);
    }

    #[test]
    fn rejects_unknown_version() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8] = 2;
        assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Corrupt(m)) if m.contains("version")));
    }

    #[test]
    fn rejects_truncation_and_trailing_bytes() {
        let bytes = sample().to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
        assert!(Checkpoint::from_bytes(b"garbage!").is_err());
    }
}
