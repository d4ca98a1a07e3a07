//! Self-contained binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes  "KGLPCKPT"
//! version      u32      FORMAT_VERSION
//! vocab_size   u64
//! dim          u64
//! n_labels     u64
//! fingerprint  u32 length + UTF-8
//! vocab        vocab_size x (u32 length + UTF-8), row order
//! labels       n_labels x (u32 length + UTF-8), column order
//! embeddings   vocab_size * dim f64, row-major
//! weights      n_labels * dim f64, row-major
//! bias         n_labels f64
//! ```

use std::fs;
use std::path::Path;

use super::model::{ModelParams, Vocab};
use super::Model;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"KGLPCKPT";
pub const FORMAT_VERSION: u32 = 1;

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn to_bytes(model: &Model) -> Vec<u8> {
    let p = &model.params;
    let mut out = Vec::with_capacity(64 + 8 * p.n_values());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for n in [p.vocab_size(), p.dim, p.n_labels()] {
        out.extend_from_slice(&(n as u64).to_le_bytes());
    }
    put_str(&mut out, &model.fingerprint);
    for t in model.vocab.tokens() {
        put_str(&mut out, t);
    }
    for l in &model.labels {
        put_str(&mut out, l);
    }
    for v in p.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Checkpoint(format!("size {v} overflows")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|e| Error::Checkpoint(format!("invalid UTF-8: {e}")))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<Model> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let vocab_size = r.u64()?;
    let dim = r.u64()?;
    let n_labels = r.u64()?;
    let fingerprint = r.string()?;
    let tokens = (0..vocab_size).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let labels = (0..n_labels).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let vocab = Vocab::from_tokens(tokens.iter().skip(1).cloned());
    if vocab.tokens() != tokens.as_slice() {
        return Err(Error::Checkpoint("vocabulary rows are not unique or miss [UNK]".into()));
    }
    let mut params = ModelParams::zeros(vocab_size, dim, n_labels);
    for v in params.values_mut() {
        *v = r.f64()?;
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Model {
        vocab,
        labels,
        params,
        fingerprint,
    })
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Model> {
    from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn model() -> Model {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        Model {
            vocab: Vocab::from_tokens(["a", "New York", "[MASK]"]),
            labels: vec!["x".into(), "y".into()],
            params: ModelParams::random(4, 3, 2, 0.5, &mut rng),
            fingerprint: "abc123".into(),
        }
    }

    #[test]
    fn roundtrip_is_exact() {
        let m = model();
        let bytes = to_bytes(&m);
        assert_eq!(&bytes[..8], MAGIC);
        assert_eq!(from_bytes(&bytes).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs() {
        let bytes = to_bytes(&model());
        assert!(from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(from_bytes(&extra).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(from_bytes(&bad).is_err());
        let mut future = bytes;
        future[8] = 9;
        assert!(from_bytes(&future).is_err());
    }
}
