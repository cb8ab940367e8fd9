//! `RRNN` little-endian network file.
//!
//! ```text
//! magic    4 bytes  "RRNN"
//! version  u32      1
//! layers   u32
//! per layer:
//!   n_out       u32
//!   n_in        u32
//!   activation  u8    0 = linear, 1 = relu, 2 = cosine head (last layer only)
//!   weights     f64 × n_out·n_in, row-major
//!   biases      f64 × n_out  (cosine head: per-class gains)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::layer::{Activation, DenseLayer};
use crate::nn::network::{HeadKind, Network};

pub const MAGIC: &[u8; 4] = b"RRNN";
pub const VERSION: u32 = 1;

const ACT_LINEAR: u8 = 0;
const ACT_RELU: u8 = 1;
const ACT_COSINE_HEAD: u8 = 2;

pub fn encode(net: &Network) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(net.layers().len() as u32).to_le_bytes());
    let last = net.layers().len() - 1;
    for (i, layer) in net.layers().iter().enumerate() {
        out.extend_from_slice(&(layer.n_out() as u32).to_le_bytes());
        out.extend_from_slice(&(layer.n_in() as u32).to_le_bytes());
        let tag = match (layer.activation, i == last && net.head_kind() == HeadKind::Cosine) {
            (_, true) => ACT_COSINE_HEAD,
            (Activation::Linear, _) => ACT_LINEAR,
            (Activation::Relu, _) => ACT_RELU,
        };
        out.push(tag);
        for v in layer.weights.as_slice().iter().chain(&layer.bias) {
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
            return Err(Error::Truncated(format!(
                "needed {n} bytes for {what} at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("size overflow".into()))?, what)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(buf: &[u8]) -> Result<Network> {
    if buf.len() < 4 || &buf[..4] != MAGIC {
        return Err(Error::Format("missing RRNN magic".into()));
    }
    let mut cur = Cursor { buf, pos: 4 };
    let version = cur.u32("version")?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported RRNN version {version}")));
    }
    let n_layers = cur.u32("layer count")? as usize;
    if n_layers == 0 {
        return Err(Error::Format("network file has no layers".into()));
    }
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    let mut head_kind = HeadKind::Linear;
    for l in 0..n_layers {
        let n_out = cur.u32("n_out")? as usize;
        let n_in = cur.u32("n_in")? as usize;
        let tag = cur.take(1, "activation")?[0];
        let activation = match tag {
            ACT_LINEAR => Activation::Linear,
            ACT_RELU => Activation::Relu,
            ACT_COSINE_HEAD if l + 1 == n_layers => {
                head_kind = HeadKind::Cosine;
                Activation::Linear
            }
            other => {
                return Err(Error::Format(format!("bad activation tag {other} in layer {l}")));
            }
        };
        let weights = Matrix::from_vec(n_out, n_in, cur.f64s(n_out * n_in, "weights")?)?;
        let bias = cur.f64s(n_out, "biases")?;
        layers.push(DenseLayer::new(weights, bias, activation)?);
    }
    if cur.pos != buf.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after last layer",
            buf.len() - cur.pos
        )));
    }
    Network::new(layers, head_kind)
}

pub fn write_to(net: &Network, mut w: impl Write) -> std::io::Result<()> {
    w.write_all(&encode(net))
}

pub fn read_from(mut r: impl Read) -> Result<Network> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)
        .map_err(|e| Error::io("<reader>", e))?;
    decode(&buf)
}

pub fn save(net: &Network, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let net = Network::mlp(&[3, 2], HeadKind::Linear, &mut Rng::new(0)).unwrap();
        let bytes = encode(&net);
        assert_eq!(&bytes[..4], b"RRNN");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..20], &3u32.to_le_bytes());
        assert_eq!(bytes[20], 0);
        assert_eq!(bytes.len(), 21 + 8 * (6 + 2));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(decode(b""), Err(Error::Format(_))));
        assert!(matches!(decode(b"NOPE\x01\0\0\0"), Err(Error::Format(_))));
        let net = Network::mlp(&[3, 4, 2], HeadKind::Linear, &mut Rng::new(0)).unwrap();
        let bytes = encode(&net);
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::Truncated(_))));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(Error::Format(_))));
    }

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(
            sizes in prop::collection::vec(1usize..6, 2..5),
            cosine in any::<bool>(),
            seed in any::<u64>(),
        ) {
            let kind = if cosine { HeadKind::Cosine } else { HeadKind::Linear };
            let net = Network::mlp(&sizes, kind, &mut Rng::new(seed)).unwrap();
            let bytes = encode(&net);
            let back = decode(&bytes).unwrap();
            prop_assert_eq!(back.param_bytes(), net.param_bytes());
            prop_assert_eq!(encode(&back), bytes);
            prop_assert_eq!(back.head_kind(), kind);
        }
    }
}
