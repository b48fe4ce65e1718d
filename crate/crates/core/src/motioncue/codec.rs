//! Block-matching stand-in for a compressed-video codec: I-frames every
//! `gop_len` frames, P-frames storing one integer displacement per block plus
//! the motion-compensated RGB residual.

use rayon::prelude::*;

use crate::error::{DvtError, Result};
use crate::numerics::Tensor;
use crate::tokenization::ClipTensor;

/// Integer block displacement `(dy, dx)` in pixels: block content at `p` in
/// the current frame came from `p − (dy, dx)` in the previous frame.
pub type Displacement = (i16, i16);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualMode {
    F32,
    /// `i8` codes with one scale per frame.
    Quantized,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Residual {
    F32(Vec<f32>),
    Quantized { scale: f32, codes: Vec<i8> },
}

impl Residual {
    pub fn value(&self, i: usize) -> f32 {
        match self {
            Residual::F32(v) => v[i],
            Residual::Quantized { scale, codes } => f32::from(codes[i]) * scale,
        }
    }

    pub fn dequantized(&self) -> Vec<f32> {
        match self {
            Residual::F32(v) => v.clone(),
            Residual::Quantized { scale, codes } => codes.iter().map(|&c| f32::from(c) * scale).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GopFrame {
    Intra(Tensor<f32>),
    Predicted { md: Vec<Displacement>, residual: Residual },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CodecParams {
    pub block: usize,
    pub radius: usize,
    pub gop_len: usize,
    pub residual: ResidualMode,
}

impl Default for CodecParams {
    fn default() -> Self {
        CodecParams {
            block: 4,
            radius: 3,
            gop_len: 8,
            residual: ResidualMode::F32,
        }
    }
}

/// Encoded clip: one I-frame at every multiple of `gop_len`, each followed by
/// `gop_len − 1` P-frames.
#[derive(Clone, Debug, PartialEq)]
pub struct GopClip {
    pub height: usize,
    pub width: usize,
    pub block: usize,
    pub gop_len: usize,
    pub residual_mode: ResidualMode,
    pub frames: Vec<GopFrame>,
}

impl GopClip {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn blocks_h(&self) -> usize {
        self.height / self.block
    }

    pub fn blocks_w(&self) -> usize {
        self.width / self.block
    }

    pub fn i_frames(&self) -> impl Iterator<Item = &Tensor<f32>> {
        self.frames.iter().filter_map(|f| match f {
            GopFrame::Intra(img) => Some(img),
            _ => None,
        })
    }

    pub fn p_frames(&self) -> impl Iterator<Item = (&[Displacement], &Residual)> {
        self.frames.iter().filter_map(|f| match f {
            GopFrame::Predicted { md, residual } => Some((md.as_slice(), residual)),
            _ => None,
        })
    }

    /// Displacement field of frame `t`; `None` for I-frames.
    pub fn md(&self, t: usize) -> Option<&[Displacement]> {
        match &self.frames[t] {
            GopFrame::Predicted { md, .. } => Some(md),
            GopFrame::Intra(_) => None,
        }
    }

    pub fn residual(&self, t: usize) -> Option<&Residual> {
        match &self.frames[t] {
            GopFrame::Predicted { residual, .. } => Some(residual),
            GopFrame::Intra(_) => None,
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(DvtError::Domain(format!("malformed GOP: {msg}")));
        if self.block == 0
            || self.gop_len == 0
            || !self.height.is_multiple_of(self.block)
            || !self.width.is_multiple_of(self.block)
        {
            return bad(format!(
                "{}x{} frame, block {}, gop {}",
                self.height, self.width, self.block, self.gop_len
            ));
        }
        let pixels = self.height * self.width * 3;
        let blocks = self.blocks_h() * self.blocks_w();
        for (t, f) in self.frames.iter().enumerate() {
            let intra_expected = t % self.gop_len == 0;
            match f {
                GopFrame::Intra(img) => {
                    if !intra_expected || img.len() != pixels {
                        return bad(format!("unexpected or mis-sized I-frame at {t}"));
                    }
                }
                GopFrame::Predicted { md, residual } => {
                    let rl = match residual {
                        Residual::F32(v) => v.len(),
                        Residual::Quantized { codes, .. } => codes.len(),
                    };
                    if intra_expected || md.len() != blocks || rl != pixels {
                        return bad(format!("unexpected or mis-sized P-frame at {t}"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Motion-compensated prediction: `pred(y, x) = prev(y − dy, x − dx)` with
/// the source clamped to the frame.
pub fn warp(prev: &[f32], h: usize, w: usize, block: usize, md: &[Displacement]) -> Vec<f32> {
    let bw = w / block;
    let mut out = vec![0.0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = md[(y / block) * bw + x / block];
            let sy = (y as isize - dy as isize).clamp(0, h as isize - 1) as usize;
            let sx = (x as isize - dx as isize).clamp(0, w as isize - 1) as usize;
            let (d, s) = ((y * w + x) * 3, (sy * w + sx) * 3);
            out[d..d + 3].copy_from_slice(&prev[s..s + 3]);
        }
    }
    out
}

/// Sum of absolute differences between block `(by, bx)` of `cur` and its
/// prediction from `prev` under displacement `(dy, dx)`.
pub fn block_sad(
    cur: &[f32],
    prev: &[f32],
    h: usize,
    w: usize,
    block: usize,
    by: usize,
    bx: usize,
    dy: isize,
    dx: isize,
) -> f64 {
    let mut sad = 0.0f64;
    for y in by * block..(by + 1) * block {
        let sy = (y as isize - dy).clamp(0, h as isize - 1) as usize;
        for x in bx * block..(bx + 1) * block {
            let sx = (x as isize - dx).clamp(0, w as isize - 1) as usize;
            let (c, p) = ((y * w + x) * 3, (sy * w + sx) * 3);
            for ch in 0..3 {
                sad += f64::from((cur[c + ch] - prev[p + ch]).abs());
            }
        }
    }
    sad
}

fn search_block(
    cur: &[f32],
    prev: &[f32],
    h: usize,
    w: usize,
    block: usize,
    radius: isize,
    by: usize,
    bx: usize,
) -> Displacement {
    // Ties go to the smallest |dy|+|dx|, then to raster order of (dy, dx).
    let mut best = (f64::INFINITY, isize::MAX, 0isize, 0isize);
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let sad = block_sad(cur, prev, h, w, block, by, bx, dy, dx);
            let key = (sad, dy.abs() + dx.abs(), dy, dx);
            if key.partial_cmp(&best) == Some(std::cmp::Ordering::Less) {
                best = key;
            }
        }
    }
    (best.2 as i16, best.3 as i16)
}

fn quantize(residual: &[f32]) -> Residual {
    let max = residual.iter().fold(0.0f32, |m, &v| m.max(v.abs()));
    if max == 0.0 {
        return Residual::Quantized {
            scale: 0.0,
            codes: vec![0; residual.len()],
        };
    }
    let scale = max / 127.0;
    let codes = residual
        .iter()
        .map(|&v| (v / scale).round().clamp(-127.0, 127.0) as i8)
        .collect();
    Residual::Quantized { scale, codes }
}

/// Exhaustive integer block matching against the previous *reconstructed*
/// frame, so encoder and decoder stay in lock-step.
pub fn block_match_encode(clip: &ClipTensor, params: &CodecParams) -> Result<GopClip> {
    let (t, h, w) = clip.dims();
    let b = params.block;
    if b == 0 || h % b != 0 || w % b != 0 {
        return Err(DvtError::config(format!("frame {h}x{w} not divisible by block {b}")));
    }
    if params.gop_len == 0 {
        return Err(DvtError::config("gop_len must be >= 1"));
    }
    if params.radius > i16::MAX as usize {
        return Err(DvtError::config("search radius too large"));
    }
    let (bh, bw) = (h / b, w / b);
    let mut frames = Vec::with_capacity(t);
    let mut recon: Vec<f32> = Vec::new();
    for i in 0..t {
        let cur = clip.frame(i);
        if i % params.gop_len == 0 {
            recon = cur.to_vec();
            frames.push(GopFrame::Intra(clip.frame_tensor(i)));
            continue;
        }
        let md: Vec<Displacement> = (0..bh * bw)
            .into_par_iter()
            .map(|k| search_block(cur, &recon, h, w, b, params.radius as isize, k / bw, k % bw))
            .collect();
        let pred = warp(&recon, h, w, b, &md);
        let raw: Vec<f32> = cur.iter().zip(&pred).map(|(c, p)| c - p).collect();
        let residual = match params.residual {
            ResidualMode::F32 => Residual::F32(raw),
            ResidualMode::Quantized => quantize(&raw),
        };
        recon = pred.iter().enumerate().map(|(j, &p)| p + residual.value(j)).collect();
        frames.push(GopFrame::Predicted { md, residual });
    }
    Ok(GopClip {
        height: h,
        width: w,
        block: b,
        gop_len: params.gop_len,
        residual_mode: params.residual,
        frames,
    })
}

/// Sequential reconstruction: I-frames verbatim, P-frames as
/// `warp(previous, md) + residual`.
pub fn gop_decode(gop: &GopClip) -> Result<ClipTensor> {
    gop.validate()?;
    let (h, w) = (gop.height, gop.width);
    let mut out: Vec<Tensor<f32>> = Vec::with_capacity(gop.len());
    let mut recon: Vec<f32> = Vec::new();
    for f in &gop.frames {
        match f {
            GopFrame::Intra(img) => recon = img.data().to_vec(),
            GopFrame::Predicted { md, residual } => {
                let pred = warp(&recon, h, w, gop.block, md);
                recon = pred.iter().enumerate().map(|(j, &p)| p + residual.value(j)).collect();
            }
        }
        out.push(Tensor::from_parts(vec![h, w, 3], recon.clone()));
    }
    ClipTensor::from_frames(&out)
}
