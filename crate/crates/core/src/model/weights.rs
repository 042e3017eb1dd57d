//! `.dnw` weight files.
//!
//! ```text
//! magic    4 bytes  "DNW1"
//! version  u32      1
//! input    3 × u32  height, width, channels
//! dropout  f32
//! count    u32      number of tensors
//! per tensor: name_len u32, name bytes, ndim u32, ndim × u32 dims
//! data     f32 values for every tensor, in declaration order
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use crate::error::{Error, Result};

use super::network::{tensor_shapes, InputShape, ModelParams};

pub const MAGIC: &[u8; 4] = b"DNW1";
pub const VERSION: u32 = 1;

pub fn encode_weights(params: &ModelParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for dim in [params.input.height, params.input.width, params.input.channels] {
        out.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.dropout_p as f32).to_le_bytes());
    out.extend_from_slice(&(params.tensors.len() as u32).to_le_bytes());
    for t in &params.tensors {
        out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
        out.extend_from_slice(t.name.as_bytes());
        out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for t in &params.tensors {
        for &x in &t.data {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Decode {
                offset: self.bytes.len(),
                message: format!("weights truncated: needed {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn fail(&self, message: String) -> Error {
        Error::Decode {
            offset: self.pos,
            message,
        }
    }
}

pub fn decode_weights(bytes: &[u8]) -> Result<ModelParams> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Decode {
            offset: 0,
            message: "not a .dnw weights file".into(),
        });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.fail(format!("unsupported weights version {version}")));
    }
    let (h, w, c) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let input = InputShape::new(h, w, c)?;
    let dropout = r.f32()? as f64;
    let mut params = ModelParams::zeros(input, dropout)?;
    let expected = tensor_shapes(&input);
    let count = r.u32()? as usize;
    if count != expected.len() {
        return Err(r.fail(format!("expected {} tensors, header lists {count}", expected.len())));
    }
    for (name, shape) in &expected {
        let len = r.u32()? as usize;
        let got = r.take(len)?.to_vec();
        if got != name.as_bytes() {
            return Err(r.fail(format!(
                "expected tensor {name}, found {}",
                String::from_utf8_lossy(&got)
            )));
        }
        let ndim = r.u32()? as usize;
        let dims = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        if &dims != shape {
            return Err(r.fail(format!("tensor {name} has shape {dims:?}, expected {shape:?}")));
        }
    }
    for t in &mut params.tensors {
        for x in &mut t.data {
            *x = r.f32()? as f64;
        }
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(params)
}

pub fn save_weights(path: &Path, params: &ModelParams) -> Result<()> {
    std::fs::write(path, encode_weights(params)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<ModelParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_rounds_to_f32() {
        let p = ModelParams::init(InputShape::new(8, 12, 3).unwrap(), 0.5, 1).unwrap();
        let bytes = encode_weights(&p);
        assert_eq!(&bytes[..4], MAGIC);
        let q = decode_weights(&bytes).unwrap();
        assert_eq!(q.input, p.input);
        assert_eq!(q.dropout_p, 0.5);
        for (a, b) in q.tensors.iter().zip(&p.tensors) {
            assert_eq!(a.shape, b.shape);
            for (x, y) in a.data.iter().zip(&b.data) {
                assert_eq!(*x, *y as f32 as f64);
            }
        }
        assert_eq!(encode_weights(&q), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let p = ModelParams::init(InputShape::new(4, 4, 1).unwrap(), 0.5, 1).unwrap();
        let bytes = encode_weights(&p);
        assert!(decode_weights(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_weights(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_weights(&extra).is_err());
    }
}
