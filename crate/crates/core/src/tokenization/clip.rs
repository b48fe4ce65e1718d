//! `.dvt-clip`: `"DVTC" | u32 version=1 | u32 T | u32 H | u32 W | T·H·W·3 × f32`.

use std::path::Path;

use crate::error::{DvtError, Result};
use crate::numerics::io::{put_u32, ByteReader};
use crate::numerics::Tensor;

pub const CLIP_MAGIC: &[u8; 4] = b"DVTC";
const CLIP_VERSION: u32 = 1;

/// RGB clip `[T × H × W × 3]` with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClipTensor {
    pub frames: Tensor<f32>,
    /// Source sampling stride; metadata only.
    pub frame_stride: u32,
}

impl ClipTensor {
    pub fn new(frames: Tensor<f32>) -> Result<Self> {
        let s = frames.shape();
        if s.len() != 4 || s[3] != 3 {
            return Err(DvtError::shape("clip", s, &[0, 0, 0, 3]));
        }
        Ok(ClipTensor {
            frames,
            frame_stride: 1,
        })
    }

    /// `(T, H, W)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let s = self.frames.shape();
        (s[0], s[1], s[2])
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let (_, h, w) = self.dims();
        let n = h * w * 3;
        &self.frames.data()[t * n..(t + 1) * n]
    }

    pub fn frame_tensor(&self, t: usize) -> Tensor<f32> {
        let (_, h, w) = self.dims();
        Tensor::from_parts(vec![h, w, 3], self.frame(t).to_vec())
    }

    pub fn from_frames(frames: &[Tensor<f32>]) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| DvtError::config("clip needs at least one frame"))?;
        let (h, w) = (first.shape()[0], first.shape()[1]);
        let mut data = Vec::with_capacity(frames.len() * h * w * 3);
        for f in frames {
            if f.shape() != first.shape() {
                return Err(DvtError::shape("clip frames", first.shape(), f.shape()));
            }
            data.extend_from_slice(f.data());
        }
        ClipTensor::new(Tensor::from_parts(vec![frames.len(), h, w, 3], data))
    }
}

pub fn write_clip_bytes(clip: &ClipTensor) -> Vec<u8> {
    let (t, h, w) = clip.dims();
    let mut out = Vec::with_capacity(20 + clip.frames.len() * 4);
    out.extend_from_slice(CLIP_MAGIC);
    put_u32(&mut out, CLIP_VERSION);
    for e in [t, h, w] {
        put_u32(&mut out, e as u32);
    }
    for &v in clip.frames.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_clip_bytes(bytes: &[u8]) -> Result<ClipTensor> {
    let mut r = ByteReader::new(bytes, "dvt-clip");
    r.expect_magic(CLIP_MAGIC)?;
    let at = r.position();
    let version = r.u32()?;
    if version != CLIP_VERSION {
        return Err(r.error_at(at, format!("unsupported version {version}")));
    }
    let t = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let n = t
        .checked_mul(h)
        .and_then(|x| x.checked_mul(w))
        .and_then(|x| x.checked_mul(3))
        .ok_or_else(|| r.error("frame extents overflow"))?;
    let data = r.scalars::<f32>(n)?;
    r.finish()?;
    ClipTensor::new(Tensor::from_parts(vec![t, h, w, 3], data))
}

pub fn write_clip(path: &Path, clip: &ClipTensor) -> Result<()> {
    std::fs::write(path, write_clip_bytes(clip)).map_err(|e| DvtError::io(path, e))
}

pub fn read_clip(path: &Path) -> Result<ClipTensor> {
    let bytes = std::fs::read(path).map_err(|e| DvtError::io(path, e))?;
    read_clip_bytes(&bytes)
}
