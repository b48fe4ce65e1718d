use crate::error::{DvtError, Result};
use crate::numerics::Tensor;

use super::codec::GopClip;

/// `B` contiguous, non-overlapping groups of `T / B` frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubClips {
    pub frames: usize,
    pub count: usize,
}

impl SubClips {
    pub fn new(frames: usize, count: usize) -> Result<Self> {
        if count == 0 || !frames.is_multiple_of(count) {
            return Err(DvtError::config(format!(
                "{frames} frames cannot be split into {count} sub-clips"
            )));
        }
        Ok(SubClips { frames, count })
    }

    pub fn len(&self) -> usize {
        self.frames / self.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, t: usize) -> usize {
        t / self.len()
    }

    pub fn range_of(&self, t: usize) -> std::ops::Range<usize> {
        let start = self.index_of(t) * self.len();
        start..start + self.len()
    }

    pub fn same(&self, t: usize, u: usize) -> bool {
        t < self.frames && u < self.frames && self.index_of(t) == self.index_of(u)
    }

    pub fn check(&self, t: usize, u: usize) -> Result<()> {
        if !self.same(t, u) {
            return Err(DvtError::Domain(format!(
                "frames {t} and {u} are not in the same sub-clip (length {})",
                self.len()
            )));
        }
        Ok(())
    }

    /// Sub-clips measured in a coarser frame unit, e.g. token frames of a
    /// tubelet embedding.
    pub fn scaled(&self, factor: usize) -> SubClips {
        SubClips {
            frames: self.frames * factor,
            count: self.count,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Accumulation {
    /// Follow the displaced position hop by hop, looking up the block under
    /// it at each step.
    #[default]
    Chained,
    /// Sum the displacements stored at the starting block.
    FixedLocation,
}

fn forward_blocks(gop: &GopClip, from: usize, to: usize, mode: Accumulation) -> Vec<(f64, f64)> {
    let (bh, bw, b) = (gop.blocks_h(), gop.blocks_w(), gop.block);
    let half = (b as f64 - 1.0) / 2.0;
    let mut out = Vec::with_capacity(bh * bw);
    for by in 0..bh {
        for bx in 0..bw {
            let start = ((by * b) as f64 + half, (bx * b) as f64 + half);
            let mut p = start;
            for k in from + 1..=to {
                let Some(md) = gop.md(k) else { continue };
                let idx = match mode {
                    Accumulation::Chained => {
                        let ly = (p.0 / b as f64).floor().clamp(0.0, (bh - 1) as f64) as usize;
                        let lx = (p.1 / b as f64).floor().clamp(0.0, (bw - 1) as f64) as usize;
                        ly * bw + lx
                    }
                    Accumulation::FixedLocation => by * bw + bx,
                };
                p.0 += f64::from(md[idx].0);
                p.1 += f64::from(md[idx].1);
            }
            out.push((p.0 - start.0, p.1 - start.1));
        }
    }
    out
}

/// Accumulated displacement from frame `t` to frame `u` per block, in pixels.
/// Backward requests negate the forward accumulation from `u` to `t`.
pub fn accumulate_md_blocks(gop: &GopClip, t: usize, u: usize, mode: Accumulation) -> Vec<(f64, f64)> {
    if u >= t {
        forward_blocks(gop, t, u, mode)
    } else {
        forward_blocks(gop, u, t, mode)
            .into_iter()
            .map(|(dy, dx)| (-dy, -dx))
            .collect()
    }
}

/// Per-pixel `[H × W × 2]` displacement field (pixels), each pixel carrying
/// its block's accumulated displacement.
pub fn md_pixel_field(gop: &GopClip, t: usize, u: usize, mode: Accumulation) -> Vec<f64> {
    let blocks = accumulate_md_blocks(gop, t, u, mode);
    let (h, w, b, bw) = (gop.height, gop.width, gop.block, gop.blocks_w());
    let mut out = vec![0.0; h * w * 2];
    for y in 0..h {
        for x in 0..w {
            let (dy, dx) = blocks[(y / b) * bw + x / b];
            out[(y * w + x) * 2] = dy;
            out[(y * w + x) * 2 + 1] = dx;
        }
    }
    out
}

/// Accumulated motion between frames `t` and `u` averaged to the patch grid,
/// in patch units: `[H/P × W/P × 2]`.
pub fn accumulate_md(
    gop: &GopClip,
    t: usize,
    u: usize,
    subclips: &SubClips,
    patch: usize,
    mode: Accumulation,
) -> Result<Tensor<f64>> {
    subclips.check(t, u)?;
    if u >= gop.len() || t >= gop.len() {
        return Err(DvtError::Domain(format!(
            "frame index out of range for {} frames",
            gop.len()
        )));
    }
    if patch == 0 || !gop.height.is_multiple_of(patch) || !gop.width.is_multiple_of(patch) {
        return Err(DvtError::config(format!(
            "patch {patch} does not tile {}x{}",
            gop.height, gop.width
        )));
    }
    let field = md_pixel_field(gop, t, u, mode);
    let (h, w) = (gop.height, gop.width);
    let (gh, gw) = (h / patch, w / patch);
    let norm = (patch * patch * patch) as f64;
    let mut out = vec![0.0; gh * gw * 2];
    for y in 0..h {
        for x in 0..w {
            let cell = ((y / patch) * gw + x / patch) * 2;
            out[cell] += field[(y * w + x) * 2] / norm;
            out[cell + 1] += field[(y * w + x) * 2 + 1] / norm;
        }
    }
    Tensor::new(&[gh, gw, 2], out)
}
