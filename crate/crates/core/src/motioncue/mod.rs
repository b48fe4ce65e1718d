//! Motion cues from a synthetic compressed-video stream: block-matching
//! encoder/decoder with an I/P GOP structure, temporal accumulation of
//! displacements and residuals, the four cue builders, and learnable cue
//! tokenization.

mod accumulate;
mod codec;
mod cue;
mod gop_io;

pub use accumulate::{accumulate_md, accumulate_md_blocks, md_pixel_field, Accumulation, SubClips};
pub use codec::{
    block_match_encode, block_sad, gop_decode, warp, CodecParams, Displacement, GopClip, GopFrame, Residual,
    ResidualMode,
};
pub use cue::{build_cue, tokenize_cue, CueKind, MotionTokenizer};
pub use gop_io::{read_gop, read_gop_bytes, write_gop, write_gop_bytes, GOP_MAGIC};

use crate::error::Result;
use crate::numerics::{Scalar, Tensor};
use crate::tokenization::ClipTensor;

/// All raw cues a clip needs for deformable space-time attention: one
/// `[S × cue_dim]` slice per (query frame, frame of the same sub-clip) pair,
/// in token-frame units.
#[derive(Clone, Debug, PartialEq)]
pub struct CueBank<T> {
    pub kind: CueKind,
    pub subclips: SubClips,
    pub sites: usize,
    /// `[frames · span · S × cue_dim]`; row `((t·span + j)·S + s)` holds the
    /// cue from frame `t` to the `j`-th frame of `t`'s sub-clip at site `s`.
    pub data: Tensor<T>,
}

impl<T: Scalar> CueBank<T> {
    pub fn span(&self) -> usize {
        self.subclips.len()
    }

    pub fn pairs(&self) -> usize {
        self.subclips.frames * self.span()
    }

    pub fn row(&self, t: usize, j: usize, s: usize) -> &[T] {
        self.data.row((t * self.span() + j) * self.sites + s)
    }

    pub fn cast<U: Scalar>(&self) -> CueBank<U> {
        CueBank {
            kind: self.kind,
            subclips: self.subclips,
            sites: self.sites,
            data: self.data.cast(),
        }
    }

    /// Zero cues of the right shape; a stand-in when no codec data exists.
    pub fn zeros(kind: CueKind, subclips: SubClips, sites: usize, patch: usize) -> Self {
        let rows = subclips.frames * subclips.len() * sites;
        CueBank {
            kind,
            subclips,
            sites,
            data: Tensor::zeros(&[rows, kind.patch_dim(patch)]),
        }
    }
}

/// Builds every intra-sub-clip cue slice. `subclips` is in token frames; token
/// frame `t` maps to raw frame `t · tubelet`.
pub fn build_cue_bank<T: Scalar>(
    clip: &ClipTensor,
    gop: &GopClip,
    kind: CueKind,
    subclips: &SubClips,
    tubelet: usize,
    patch: usize,
    mode: Accumulation,
) -> Result<CueBank<T>> {
    let raw = subclips.scaled(tubelet);
    let span = subclips.len();
    let mut data = Vec::new();
    let mut sites = 0;
    let mut width = kind.patch_dim(patch);
    for t in 0..subclips.frames {
        for u in subclips.range_of(t) {
            let slice = build_cue::<T>(clip, gop, kind, t * tubelet, u * tubelet, &raw, patch, mode)?;
            sites = slice.rows();
            width = slice.last_dim();
            data.extend_from_slice(slice.data());
        }
    }
    let rows = subclips.frames * span * sites;
    Ok(CueBank {
        kind,
        subclips: *subclips,
        sites,
        data: Tensor::new(&[rows, width], data)?,
    })
}
