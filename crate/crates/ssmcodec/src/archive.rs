//! Weight archive layout. All integers are little-endian.
//!
//! ```text
//! magic "SSMW" | version u16 (1) | seed u64 | config (72 bytes)
//! entry count u32
//! per entry, sorted by name:
//!   name length u16 | UTF-8 name | rank u8 | dims u32 × rank | f32 values
//! ```
//!
//! Saving is canonical (sorted names), so identical stores give identical
//! bytes. Loading accepts entries in any order.

use std::path::Path;

use ssmcodec_core::transforms::TransformConfig;
use ssmcodec_core::weights::WeightStore;
use ssmcodec_core::Tensor;

use crate::error::{CodecError, Result};

pub const MAGIC: [u8; 4] = *b"SSMW";
pub const VERSION: u16 = 1;

pub fn to_bytes(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 * store.parameter_count() + 64 * store.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&store.seed.to_le_bytes());
    out.extend_from_slice(&store.config.to_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&t.to_le_bytes());
    }
    out
}

fn bad(msg: impl Into<String>) -> CodecError {
    CodecError::format("weight archive", msg)
}

struct Reader<'a> {
    b: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.b.len())
            .ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.b[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().unwrap())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = Reader { b: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u16::from_le_bytes(r.array()?);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let seed = u64::from_le_bytes(r.array()?);
    let config = TransformConfig::from_bytes(r.take(TransformConfig::ENCODED_LEN)?)?;
    let count = u32::from_le_bytes(r.array()?) as usize;
    let mut store = WeightStore::new(seed, config);
    for _ in 0..count {
        let len = u16::from_le_bytes(r.array()?) as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| bad("parameter name is not UTF-8"))?
            .to_owned();
        let rank = r.take(1)?[0] as usize;
        let shape = (0..rank)
            .map(|_| Ok(u32::from_le_bytes(r.array()?) as usize))
            .collect::<Result<Vec<_>>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| bad("shape overflows"))?;
        let raw = r.take(n.checked_mul(4).ok_or_else(|| bad("shape overflows"))?)?;
        let data = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        store.insert(name, Tensor::new(shape, data)?)?;
    }
    if r.pos != bytes.len() {
        return Err(bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(store)
}

pub fn save(store: &WeightStore, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(store)).map_err(CodecError::io(path))
}

pub fn load(path: &Path) -> Result<WeightStore> {
    let bytes = std::fs::read(path).map_err(CodecError::io(path))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ssmcodec_core::weights::init_weights;

    #[test]
    fn save_load_save_is_identity() {
        let store = init_weights(&TransformConfig::tiny(), 11).unwrap();
        let a = to_bytes(&store);
        let back = from_bytes(&a).unwrap();
        assert_eq!(back, store);
        assert_eq!(to_bytes(&back), a);
        assert_ne!(to_bytes(&init_weights(&TransformConfig::tiny(), 12).unwrap()), a);
    }

    #[test]
    fn loading_is_order_independent() {
        let mut s = WeightStore::new(1, TransformConfig::tiny());
        s.insert("b", Tensor::full([2], 1.5f32)).unwrap();
        s.insert("a", Tensor::zeros([1, 3])).unwrap();
        let bytes = to_bytes(&s);
        // Swap the two entries by hand.
        let head = 4 + 2 + 8 + TransformConfig::ENCODED_LEN + 4;
        let first = 2 + 1 + 1 + 8 + 12; // "a": rank 2, 3 values
        let mut swapped = bytes[..head].to_vec();
        swapped.extend_from_slice(&bytes[head + first..]);
        swapped.extend_from_slice(&bytes[head..head + first]);
        assert_eq!(from_bytes(&swapped).unwrap(), s);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = to_bytes(&init_weights(&TransformConfig::tiny(), 1).unwrap());
        assert!(from_bytes(&bytes[..bytes.len() - 2]).is_err());
        let mut v = bytes.clone();
        v[4] = 9;
        assert!(from_bytes(&v).is_err());
        let mut v = bytes;
        v.extend_from_slice(&[0, 0]);
        assert!(from_bytes(&v).is_err());
    }
}
