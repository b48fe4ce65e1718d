//! Little-endian binary framing shared by every `.dvt-*` container, plus the
//! `.dvt-ten` tensor format:
//!
//! ```text
//! "DVTT" | u32 version=1 | u8 dtype (0=f32, 1=f64) | u8 ndim | ndim × u32 extents | payload
//! ```

use std::path::Path;

use crate::error::{DvtError, Result};

use super::{Scalar, Tensor};

pub const TENSOR_MAGIC: &[u8; 4] = b"DVTT";
pub const TENSOR_VERSION: u32 = 1;

/// Cursor over a byte slice that reports the offset of any failure.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    kind: &'static str,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8], kind: &'static str) -> Self {
        ByteReader { bytes, pos: 0, kind }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn error(&self, msg: impl Into<String>) -> DvtError {
        DvtError::Format {
            kind: self.kind,
            offset: self.pos,
            msg: msg.into(),
        }
    }

    pub fn error_at(&self, offset: usize, msg: impl Into<String>) -> DvtError {
        DvtError::Format {
            kind: self.kind,
            offset,
            msg: msg.into(),
        }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(self.error(format!("truncated: need {n} bytes, have {}", self.remaining())));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let at = self.pos;
        let got = self.take(4)?;
        if got != magic {
            self.pos = at;
            return Err(self.error(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(got),
                String::from_utf8_lossy(magic)
            )));
        }
        Ok(())
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn i16(&mut self) -> Result<i16> {
        Ok(i16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(n.checked_mul(T::BYTES).ok_or_else(|| self.error("payload too large"))?)?;
        Ok(raw.chunks_exact(T::BYTES).map(T::from_le).collect())
    }

    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(self.error(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

pub fn put_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn encode_tensor<T: Scalar>(t: &Tensor<T>, out: &mut Vec<u8>) {
    out.extend_from_slice(TENSOR_MAGIC);
    put_u32(out, TENSOR_VERSION);
    out.push(T::DTYPE);
    out.push(t.ndim() as u8);
    for &e in t.shape() {
        put_u32(out, e as u32);
    }
    for &v in t.data() {
        v.to_le(out);
    }
}

/// Reads one framed tensor; the dtype tag must match `T`.
pub fn decode_tensor<T: Scalar>(r: &mut ByteReader<'_>) -> Result<Tensor<T>> {
    r.expect_magic(TENSOR_MAGIC)?;
    let at = r.position();
    let version = r.u32()?;
    if version != TENSOR_VERSION {
        return Err(r.error_at(at, format!("unsupported version {version}")));
    }
    let at = r.position();
    let dtype = r.u8()?;
    if dtype != T::DTYPE {
        return Err(r.error_at(at, format!("dtype tag {dtype}, expected {} ({})", T::DTYPE, T::NAME)));
    }
    let ndim = r.u8()? as usize;
    let shape = (0..ndim)
        .map(|_| r.u32().map(|e| e as usize))
        .collect::<Result<Vec<_>>>()?;
    let n = shape.iter().try_fold(1usize, |acc, &e| acc.checked_mul(e));
    let n = n.ok_or_else(|| r.error("extent product overflows"))?;
    let data = r.scalars::<T>(n)?;
    Ok(Tensor::from_parts(shape, data))
}

pub fn write_tensor_file<T: Scalar>(path: &Path, t: &Tensor<T>) -> Result<()> {
    let mut buf = Vec::new();
    encode_tensor(t, &mut buf);
    std::fs::write(path, buf).map_err(|e| DvtError::io(path, e))
}

pub fn read_tensor_file<T: Scalar>(path: &Path) -> Result<Tensor<T>> {
    let bytes = std::fs::read(path).map_err(|e| DvtError::io(path, e))?;
    let mut r = ByteReader::new(&bytes, "dvt-ten");
    let t = decode_tensor(&mut r)?;
    r.finish()?;
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let t = Tensor::<f32>::new(&[2, 1], vec![1.0, -2.0]).unwrap();
        let mut buf = Vec::new();
        encode_tensor(&t, &mut buf);
        assert_eq!(&buf[..4], b"DVTT");
        assert_eq!(&buf[4..8], &1u32.to_le_bytes());
        assert_eq!(buf[8], 0);
        assert_eq!(buf[9], 2);
        assert_eq!(&buf[10..14], &2u32.to_le_bytes());
        assert_eq!(&buf[18..22], &1.0f32.to_le_bytes());
        assert_eq!(buf.len(), 4 + 4 + 2 + 8 + 8);
    }

    #[test]
    fn dtype_mismatch_rejected() {
        let t = Tensor::<f32>::zeros(&[3]);
        let mut buf = Vec::new();
        encode_tensor(&t, &mut buf);
        let err = decode_tensor::<f64>(&mut ByteReader::new(&buf, "dvt-ten")).unwrap_err();
        assert!(err.to_string().contains("offset 8"), "{err}");
    }

    #[test]
    fn bad_magic_names_offset() {
        let err = decode_tensor::<f32>(&mut ByteReader::new(b"XXXX\x01\0\0\0", "dvt-ten")).unwrap_err();
        assert!(err.to_string().contains("offset 0"), "{err}");
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(shape in prop::collection::vec(1usize..4, 0..4), seed in any::<u64>()) {
            let mut rng = crate::numerics::Rng::new(seed);
            let t: Tensor<f64> = rng.normal_tensor(&shape, 3.0);
            let mut buf = Vec::new();
            encode_tensor(&t, &mut buf);
            let mut r = ByteReader::new(&buf, "dvt-ten");
            let back = decode_tensor::<f64>(&mut r).unwrap();
            r.finish().unwrap();
            prop_assert_eq!(back, t);
        }
    }
}
