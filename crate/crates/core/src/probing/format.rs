//! `RRFM` little-endian feature-matrix file for probe-only workflows.
//!
//! ```text
//! magic   4 bytes  "RRFM"
//! rows    u32
//! cols    u32
//! values  f64 × rows·cols, row-major
//! count   u32      number of labels
//! labels  i32 × count
//! ```
//!
//! The environment sidecar is `u32 count` followed by `i32` entries.

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const MAGIC: &[u8; 4] = b"RRFM";

fn put_i32s(out: &mut Vec<u8>, values: &[i32]) {
    out.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode(features: &Matrix, labels: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * features.as_slice().len() + 4 * labels.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(features.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(features.cols() as u32).to_le_bytes());
    for v in features.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    put_i32s(&mut out, labels);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let left = self.buf.len() - self.pos;
        if left < n {
            return Err(Error::Truncated(format!("{what}: need {n} bytes, {left} left")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()) as usize)
    }

    fn i32s(&mut self, what: &str) -> Result<Vec<i32>> {
        let n = self.u32(what)?;
        Ok(self
            .take(n * 4, what)?
            .chunks_exact(4)
            .map(|c| i32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn decode(buf: &[u8]) -> Result<(Matrix, Vec<i32>)> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::Format("missing RRFM magic".into()));
    }
    let mut r = Reader { buf, pos: 4 };
    let rows = r.u32("rows")?;
    let cols = r.u32("cols")?;
    let n = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
    let data = r
        .take(n, "values")?
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let labels = r.i32s("labels")?;
    r.finish()?;
    Ok((Matrix::from_vec(rows, cols, data)?, labels))
}

pub fn encode_envs(envs: &[i32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * envs.len());
    put_i32s(&mut out, envs);
    out
}

pub fn decode_envs(buf: &[u8]) -> Result<Vec<i32>> {
    let mut r = Reader { buf, pos: 0 };
    let envs = r.i32s("environment ids")?;
    r.finish()?;
    Ok(envs)
}

/// Labels as class indices; negative entries are rejected.
pub fn labels_to_usize(labels: &[i32]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&y| usize::try_from(y).map_err(|_| Error::Data(format!("negative label {y}"))))
        .collect()
}

pub fn save(path: impl AsRef<Path>, features: &Matrix, labels: &[i32]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(features, labels)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(Matrix, Vec<i32>)> {
    let path = path.as_ref();
    decode(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn layout() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = encode(&m, &[-1]);
        assert_eq!(&b[..4], b"RRFM");
        assert_eq!(b.len(), 4 + 4 + 4 + 16 + 4 + 4);
        assert_eq!(&b[b.len() - 4..], &(-1i32).to_le_bytes());
    }

    #[test]
    fn truncated_and_bad_magic() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let b = encode(&m, &[0]);
        assert!(matches!(decode(&b[..b.len() - 1]), Err(Error::Truncated(_))));
        assert!(matches!(decode(b"RRNN"), Err(Error::Format(_))));
        assert!(labels_to_usize(&[0, -2]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(rows in 0usize..5, cols in 0usize..5, seed in any::<u64>()) {
            let mut rng = crate::rng::Rng::new(seed);
            let data: Vec<f64> = (0..rows * cols).map(|_| rng.normal()).collect();
            let m = Matrix::from_vec(rows, cols, data).unwrap();
            let labels: Vec<i32> = (0..rows).map(|i| i as i32 - 1).collect();
            let (m2, l2) = decode(&encode(&m, &labels)).unwrap();
            prop_assert_eq!(m2, m);
            prop_assert_eq!(l2, labels.clone());
            prop_assert_eq!(decode_envs(&encode_envs(&labels)).unwrap(), labels);
        }
    }
}
