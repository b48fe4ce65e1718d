//! `.dvt-gop` container:
//!
//! ```text
//! "DVTG" | u32 version=1 | u32 T | u32 H | u32 W | u16 block | u16 gop_len | u8 residual_mode
//! per frame: u8 tag ('I' | 'P')
//!   I: H·W·3 × f32
//!   P: (H/block)·(W/block) × (i16 dy, i16 dx), then residual
//!      mode 0: H·W·3 × f32      mode 1: f32 scale, H·W·3 × i8
//! ```

use std::path::Path;

use crate::error::{DvtError, Result};
use crate::numerics::io::{put_u16, put_u32, ByteReader};
use crate::numerics::Tensor;

use super::codec::{GopClip, GopFrame, Residual, ResidualMode};

pub const GOP_MAGIC: &[u8; 4] = b"DVTG";
const GOP_VERSION: u32 = 1;

pub fn write_gop_bytes(gop: &GopClip) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(GOP_MAGIC);
    put_u32(&mut out, GOP_VERSION);
    for e in [gop.len(), gop.height, gop.width] {
        put_u32(&mut out, e as u32);
    }
    put_u16(&mut out, gop.block as u16);
    put_u16(&mut out, gop.gop_len as u16);
    out.push(match gop.residual_mode {
        ResidualMode::F32 => 0,
        ResidualMode::Quantized => 1,
    });
    for f in &gop.frames {
        match f {
            GopFrame::Intra(img) => {
                out.push(b'I');
                img.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
            }
            GopFrame::Predicted { md, residual } => {
                out.push(b'P');
                for &(dy, dx) in md {
                    out.extend_from_slice(&dy.to_le_bytes());
                    out.extend_from_slice(&dx.to_le_bytes());
                }
                match residual {
                    Residual::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
                    Residual::Quantized { scale, codes } => {
                        out.extend_from_slice(&scale.to_le_bytes());
                        out.extend(codes.iter().map(|&c| c as u8));
                    }
                }
            }
        }
    }
    out
}

pub fn read_gop_bytes(bytes: &[u8]) -> Result<GopClip> {
    let mut r = ByteReader::new(bytes, "dvt-gop");
    r.expect_magic(GOP_MAGIC)?;
    let at = r.position();
    let version = r.u32()?;
    if version != GOP_VERSION {
        return Err(r.error_at(at, format!("unsupported version {version}")));
    }
    let t = r.u32()? as usize;
    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let at = r.position();
    let block = r.u16()? as usize;
    let gop_len = r.u16()? as usize;
    if block == 0 || gop_len == 0 || !h.is_multiple_of(block) || !w.is_multiple_of(block) {
        return Err(r.error_at(at, format!("block {block} / gop_len {gop_len} invalid for {h}x{w}")));
    }
    let at = r.position();
    let residual_mode = match r.u8()? {
        0 => ResidualMode::F32,
        1 => ResidualMode::Quantized,
        m => return Err(r.error_at(at, format!("unknown residual mode {m}"))),
    };
    let pixels = h * w * 3;
    let blocks = (h / block) * (w / block);
    let mut frames = Vec::with_capacity(t);
    for i in 0..t {
        let at = r.position();
        let tag = r.u8()?;
        let want = if i % gop_len == 0 { b'I' } else { b'P' };
        if tag != want {
            return Err(r.error_at(
                at,
                format!("frame {i}: tag {:?}, expected {:?}", tag as char, want as char),
            ));
        }
        if tag == b'I' {
            let data = r.scalars::<f32>(pixels)?;
            frames.push(GopFrame::Intra(Tensor::new(&[h, w, 3], data)?));
        } else {
            let md = (0..blocks)
                .map(|_| Ok((r.i16()?, r.i16()?)))
                .collect::<Result<Vec<_>>>()?;
            let residual = match residual_mode {
                ResidualMode::F32 => Residual::F32(r.scalars::<f32>(pixels)?),
                ResidualMode::Quantized => {
                    let scale = r.f32()?;
                    let codes = r.take(pixels)?.iter().map(|&b| b as i8).collect();
                    Residual::Quantized { scale, codes }
                }
            };
            frames.push(GopFrame::Predicted { md, residual });
        }
    }
    r.finish()?;
    Ok(GopClip {
        height: h,
        width: w,
        block,
        gop_len,
        residual_mode,
        frames,
    })
}

pub fn write_gop(path: &Path, gop: &GopClip) -> Result<()> {
    std::fs::write(path, write_gop_bytes(gop)).map_err(|e| DvtError::io(path, e))
}

pub fn read_gop(path: &Path) -> Result<GopClip> {
    let bytes = std::fs::read(path).map_err(|e| DvtError::io(path, e))?;
    read_gop_bytes(&bytes)
}
