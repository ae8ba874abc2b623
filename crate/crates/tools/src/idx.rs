//! IDX files as distributed with MNIST, plus a double-precision variant used
//! to export synthetic datasets without loss.
//!
//! The magic number is big-endian: two zero bytes, a type code (`0x08`
//! unsigned byte, `0x0E` f64) and the number of dimensions. Each dimension
//! follows as a big-endian `u32`, then the data in row-major order.

use std::fs;
use std::path::Path;

use tnn_core::{Dataset, Sample, Tensor3};

use crate::error::{Result, ToolError};
use crate::formats::read_all;

/// Unsigned-byte images, three dimensions.
pub const IMAGES_MAGIC: u32 = 0x0000_0803;
/// Unsigned-byte labels, one dimension.
pub const LABELS_MAGIC: u32 = 0x0000_0801;
/// Big-endian f64 images, three dimensions (synthetic export).
pub const F64_IMAGES_MAGIC: u32 = 0x0000_0E03;

/// Digit mapped to label `+1` and digit mapped to `-1`.
pub const POSITIVE_CLASS: u8 = 3;
pub const NEGATIVE_CLASS: u8 = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum Pixels {
    /// Raw bytes of an unsigned-byte file.
    Bytes(Vec<u8>),
    /// Values of an f64 file.
    Floats(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Pixels,
}

impl IdxImages {
    /// Pixel `(i, j)` of image `n`, scaled to `[0, 1]` for byte images.
    pub fn value(&self, n: usize, i: usize, j: usize) -> f64 {
        let idx = (n * self.rows + i) * self.cols + j;
        match &self.pixels {
            Pixels::Bytes(b) => f64::from(b[idx]) / 255.0,
            Pixels::Floats(f) => f[idx],
        }
    }
}

fn header(bytes: &[u8], what: &str) -> Result<u32> {
    let head = bytes.get(..4).ok_or_else(|| ToolError::TruncatedFile(format!("{what}: missing magic")))?;
    Ok(u32::from_be_bytes(head.try_into().expect("4 bytes")))
}

fn dim(bytes: &[u8], k: usize, what: &str) -> Result<usize> {
    let at = 4 + 4 * k;
    let b = bytes.get(at..at + 4).ok_or_else(|| ToolError::TruncatedFile(format!("{what}: missing dimension {k}")))?;
    Ok(u32::from_be_bytes(b.try_into().expect("4 bytes")) as usize)
}

fn body<'a>(bytes: &'a [u8], offset: usize, len: usize, what: &str) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| {
        ToolError::TruncatedFile(format!("{what}: need {len} data bytes, have {}", bytes.len().saturating_sub(offset)))
    })
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages> {
    let magic = header(bytes, "images")?;
    let width = match magic {
        IMAGES_MAGIC => 1,
        F64_IMAGES_MAGIC => 8,
        found => return Err(ToolError::BadMagic { expected: "0x00000803 (images)", found }),
    };
    let count = dim(bytes, 0, "images")?;
    let rows = dim(bytes, 1, "images")?;
    let cols = dim(bytes, 2, "images")?;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .and_then(|v| v.checked_mul(width))
        .ok_or_else(|| ToolError::DimensionMismatch(format!("{count}x{rows}x{cols} images overflow")))?;
    let data = body(bytes, 16, len, "images")?;
    let pixels = if width == 1 {
        Pixels::Bytes(data.to_vec())
    } else {
        Pixels::Floats(data.chunks_exact(8).map(|b| f64::from_be_bytes(b.try_into().expect("8 bytes"))).collect())
    };
    Ok(IdxImages { count, rows, cols, pixels })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = header(bytes, "labels")?;
    if magic != LABELS_MAGIC {
        return Err(ToolError::BadMagic { expected: "0x00000801 (labels)", found: magic });
    }
    let count = dim(bytes, 0, "labels")?;
    Ok(body(bytes, 8, count, "labels")?.to_vec())
}

/// Class-3-versus-7 dataset: each `rows x cols` image becomes a
/// `rows x 1 x cols` t-vector (rows are features, columns channels), digit 3
/// is labelled `+1` and digit 7 `-1`, and the first `limit` matching samples
/// are kept in file order.
pub fn to_dataset(images: &IdxImages, labels: &[u8], limit: usize) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(ToolError::DimensionMismatch(format!("{} images but {} labels", images.count, labels.len())));
    }
    let mut samples = Vec::new();
    for (n, &label) in labels.iter().enumerate() {
        if samples.len() == limit {
            break;
        }
        let y = match label {
            POSITIVE_CLASS => 1.0,
            NEGATIVE_CLASS => -1.0,
            _ => continue,
        };
        let x = Tensor3::from_fn(images.rows, 1, images.cols, |i, _, k| images.value(n, i, k));
        samples.push(Sample { x, y });
    }
    Ok(Dataset::new(samples, images.rows, images.cols)?)
}

pub fn load_mnist(images_path: &Path, labels_path: &Path, limit: usize) -> Result<Dataset> {
    let images = parse_images(&read_all(images_path)?)?;
    let labels = parse_labels(&read_all(labels_path)?)?;
    to_dataset(&images, &labels, limit)
}

/// Encodes `data` as an f64 images file and a byte labels file (`+1` as
/// digit 3, `-1` as digit 7) that [`to_dataset`] maps back exactly.
pub fn encode_dataset(data: &Dataset) -> (Vec<u8>, Vec<u8>) {
    let (d, c) = (data.features(), data.channels());
    let mut images = Vec::with_capacity(16 + 8 * data.len() * d * c);
    images.extend_from_slice(&F64_IMAGES_MAGIC.to_be_bytes());
    for v in [data.len(), d, c] {
        images.extend_from_slice(&(v as u32).to_be_bytes());
    }
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(data.len() as u32).to_be_bytes());
    for s in data.samples() {
        for i in 0..d {
            for k in 0..c {
                images.extend_from_slice(&s.x.get(i, 0, k).to_be_bytes());
            }
        }
        labels.push(if s.y > 0.0 { POSITIVE_CLASS } else { NEGATIVE_CLASS });
    }
    (images, labels)
}

pub fn export_dataset(data: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (images, labels) = encode_dataset(data);
    fs::write(images_path, images).map_err(|e| ToolError::io(images_path, e))?;
    fs::write(labels_path, labels).map_err(|e| ToolError::io(labels_path, e))
}
