//! Binary tensor (`TNS3`) and model checkpoint (`TNNW`) files.
//!
//! All integers are 64-bit little-endian unsigned, all floats 64-bit
//! little-endian. A tensor is `"TNS3"`, then `m n c`, then its `m n c`
//! entries in slice-major order. A checkpoint is `"TNNW"`, the layer count,
//! each layer's `m n c`, the layers as `TNS3` records, and finally the head
//! as its length followed by its entries. The transform is not stored; the
//! reader supplies it.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use tnn_core::{OrthogonalTransform, Tensor3, TnnModel};

use crate::error::{Result, ToolError};

pub const TENSOR_MAGIC: &[u8; 4] = b"TNS3";
pub const MODEL_MAGIC: &[u8; 4] = b"TNNW";

/// Upper limit on any stored dimension, so a corrupt header cannot ask for
/// an absurd allocation.
const MAX_ENTRIES: u64 = 1 << 32;

pub fn write_tensor<W: Write>(out: &mut W, t: &Tensor3) -> std::io::Result<()> {
    out.write_all(TENSOR_MAGIC)?;
    let (m, n, c) = t.dims();
    for v in [m, n, c] {
        out.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in t.data() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn encode_tensor(t: &Tensor3) -> Vec<u8> {
    let mut buf = Vec::with_capacity(28 + 8 * t.len());
    write_tensor(&mut buf, t).expect("writing to a Vec cannot fail");
    buf
}

/// Cursor over an in-memory file that reports truncation instead of panicking.
struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ToolError::TruncatedFile(format!(
                "{what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn magic(&mut self, expected: &'static [u8; 4]) -> Result<()> {
        let got = self.take(4, "magic")?;
        if got != expected {
            return Err(ToolError::BadMagic {
                expected: std::str::from_utf8(expected).unwrap_or("?"),
                found: u32::from_be_bytes(got.try_into().expect("4 bytes")),
            });
        }
        Ok(())
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| ToolError::TruncatedFile(what.into()))?, what)?;
        Ok(bytes.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
    }

    fn dims(&mut self) -> Result<(usize, usize, usize)> {
        let m = self.u64("m")?;
        let n = self.u64("n")?;
        let c = self.u64("c")?;
        let total = m.checked_mul(n).and_then(|v| v.checked_mul(c)).filter(|&v| v <= MAX_ENTRIES);
        if total.is_none() {
            return Err(ToolError::DimensionMismatch(format!("tensor {m}x{n}x{c} is too large")));
        }
        Ok((m as usize, n as usize, c as usize))
    }

    fn tensor(&mut self) -> Result<Tensor3> {
        self.magic(TENSOR_MAGIC)?;
        let (m, n, c) = self.dims()?;
        let data = self.f64s(m * n * c, "tensor entries")?;
        Ok(Tensor3::from_vec(m, n, c, data)?)
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(ToolError::DimensionMismatch(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor3> {
    let mut r = Reader::new(bytes);
    let t = r.tensor()?;
    r.finish()?;
    Ok(t)
}

pub fn save_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    fs::write(path, encode_tensor(t)).map_err(|e| ToolError::io(path, e))
}

pub fn load_tensor(path: &Path) -> Result<Tensor3> {
    decode_tensor(&read_all(path)?)
}

pub fn encode_model(model: &TnnModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MODEL_MAGIC);
    buf.extend_from_slice(&(model.depth() as u64).to_le_bytes());
    for w in model.layers() {
        let (m, n, c) = w.dims();
        for v in [m, n, c] {
            buf.extend_from_slice(&(v as u64).to_le_bytes());
        }
    }
    for w in model.layers() {
        write_tensor(&mut buf, w).expect("writing to a Vec cannot fail");
    }
    buf.extend_from_slice(&(model.head().len() as u64).to_le_bytes());
    for v in model.head() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf
}

pub fn decode_model(bytes: &[u8], transform: OrthogonalTransform) -> Result<TnnModel> {
    let mut r = Reader::new(bytes);
    r.magic(MODEL_MAGIC)?;
    let depth = r.u64("layer count")?;
    if depth == 0 || depth > 1024 {
        return Err(ToolError::DimensionMismatch(format!("implausible layer count {depth}")));
    }
    let declared: Vec<(usize, usize, usize)> = (0..depth).map(|_| r.dims()).collect::<Result<_>>()?;
    let mut layers = Vec::with_capacity(declared.len());
    for (l, dims) in declared.iter().enumerate() {
        let w = r.tensor()?;
        if w.dims() != *dims {
            return Err(ToolError::DimensionMismatch(format!(
                "layer {} declared {dims:?} but stored {:?}",
                l + 1,
                w.dims()
            )));
        }
        layers.push(w);
    }
    let head_len = r.u64("head length")?;
    if head_len > MAX_ENTRIES {
        return Err(ToolError::DimensionMismatch(format!("head length {head_len} is too large")));
    }
    let head = r.f64s(head_len as usize, "head entries")?;
    r.finish()?;
    Ok(TnnModel::new(layers, head, transform)?)
}

pub fn save_model(path: &Path, model: &TnnModel) -> Result<()> {
    fs::write(path, encode_model(model)).map_err(|e| ToolError::io(path, e))
}

pub fn load_model(path: &Path, transform: OrthogonalTransform) -> Result<TnnModel> {
    decode_model(&read_all(path)?, transform)
}

pub(crate) fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    fs::File::open(path).and_then(|mut f| f.read_to_end(&mut buf)).map_err(|e| ToolError::io(path, e))?;
    Ok(buf)
}
