//! Big-endian IDX image/label files (the MNIST container).

use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tasks::dataset::Dataset;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(buf: &[u8], at: usize, what: &str) -> Result<u32> {
    buf.get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Truncated(format!("header field {what} missing")))
}

fn check_magic(buf: &[u8], expected: u32, kind: &str) -> Result<()> {
    if buf.len() < 4 {
        return Err(Error::Format(format!("{kind} file too short for an IDX magic number")));
    }
    let magic = be_u32(buf, 0, "magic")?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{kind} file has magic {magic:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

/// Parses an image file: one row per image, pixels row-major, scaled by
/// 1/255.
pub fn parse_images(buf: &[u8]) -> Result<Matrix> {
    check_magic(buf, IMAGES_MAGIC, "image")?;
    let count = be_u32(buf, 4, "count")? as usize;
    let rows = be_u32(buf, 8, "rows")? as usize;
    let cols = be_u32(buf, 12, "cols")? as usize;
    let pixels = rows * cols;
    let expected = count * pixels;
    let body = &buf[16..];
    if body.len() != expected {
        return Err(Error::Truncated(format!(
            "header promises {count} images of {rows}x{cols} ({expected} bytes), found {}",
            body.len()
        )));
    }
    let data = body.iter().map(|&b| b as f64 / 255.0).collect();
    Matrix::from_vec(count, pixels, data)
}

pub fn parse_labels(buf: &[u8]) -> Result<Vec<usize>> {
    check_magic(buf, LABELS_MAGIC, "label")?;
    let count = be_u32(buf, 4, "count")? as usize;
    let body = &buf[8..];
    if body.len() != count {
        return Err(Error::Truncated(format!(
            "header promises {count} labels, found {}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

pub fn encode_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(rows as u32).to_be_bytes());
    out.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label file pair into a single-environment dataset.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let ip = images_path.as_ref();
    let lp = labels_path.as_ref();
    let images = parse_images(&std::fs::read(ip).map_err(|e| Error::io(ip, e))?)?;
    let labels = parse_labels(&std::fs::read(lp).map_err(|e| Error::io(lp, e))?)?;
    if images.rows() != labels.len() {
        return Err(Error::Data(format!(
            "{} images but {} labels",
            images.rows(),
            labels.len()
        )));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let n = labels.len();
    Dataset::new(images, labels, vec![0; n], k)
}
