use std::fmt;
use std::str::FromStr;

use crate::error::{DvtError, Result};
use crate::numerics::{ParamId, ParamStore, Rng, Scalar, Tensor, Var};
use crate::tokenization::ClipTensor;

use super::accumulate::{md_pixel_field, Accumulation, SubClips};
use super::codec::GopClip;

/// Motion cue used to build the motion embedding `m_s^{t,t'}`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum CueKind {
    /// Accumulated codec motion displacements.
    #[default]
    Md,
    /// Accumulated codec RGB residuals.
    RgbR,
    /// Pixel-wise frame difference at the query patch.
    RgbD,
    /// Temporal mean of the RGB values at the query patch.
    AvgPRgb,
}

impl CueKind {
    pub const ALL: [CueKind; 4] = [CueKind::Md, CueKind::RgbR, CueKind::RgbD, CueKind::AvgPRgb];

    pub fn channels(self) -> usize {
        match self {
            CueKind::Md => 2,
            _ => 3,
        }
    }

    /// Width of one tokenized patch cue: `channels · P²`.
    pub fn patch_dim(self, patch: usize) -> usize {
        self.channels() * patch * patch
    }

    pub fn as_str(self) -> &'static str {
        match self {
            CueKind::Md => "md",
            CueKind::RgbR => "rgb_r",
            CueKind::RgbD => "rgb_d",
            CueKind::AvgPRgb => "avg_p_rgb",
        }
    }
}

impl fmt::Display for CueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CueKind {
    type Err = DvtError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "md" => Ok(CueKind::Md),
            "rgb_r" | "rgbr" => Ok(CueKind::RgbR),
            "rgb_d" | "rgbd" => Ok(CueKind::RgbD),
            "avg_p_rgb" | "avgprgb" => Ok(CueKind::AvgPRgb),
            other => Err(DvtError::config(format!("unknown cue kind {other:?}"))),
        }
    }
}

/// Rearranges an `[H × W × C]` pixel field into `[S × (P·P·C)]` patch rows in
/// `(dy, dx, channel)` order.
fn to_patch_rows<T: Scalar>(field: &[f64], h: usize, w: usize, c: usize, patch: usize) -> Tensor<T> {
    let (gh, gw) = (h / patch, w / patch);
    let dim = patch * patch * c;
    let mut out = Vec::with_capacity(gh * gw * dim);
    for row in 0..gh {
        for col in 0..gw {
            for dy in 0..patch {
                let y = row * patch + dy;
                let base = (y * w + col * patch) * c;
                out.extend(field[base..base + patch * c].iter().map(|&v| T::lit(v)));
            }
        }
    }
    Tensor::from_parts(vec![gh * gw, dim], out)
}

/// Raw cue between frames `t` and `u` (same sub-clip) as patch rows
/// `[S × cue_dim]`. Reads clip frames only in `[min(t,u), max(t,u)]` and codec
/// data only for frames in `(min, max]`.
#[allow(clippy::too_many_arguments)]
pub fn build_cue<T: Scalar>(
    clip: &ClipTensor,
    gop: &GopClip,
    kind: CueKind,
    t: usize,
    u: usize,
    subclips: &SubClips,
    patch: usize,
    mode: Accumulation,
) -> Result<Tensor<T>> {
    subclips.check(t, u)?;
    let (frames, h, w) = clip.dims();
    if t >= frames || u >= frames || gop.len() != frames || gop.height != h || gop.width != w {
        return Err(DvtError::Domain(format!(
            "cue request ({t},{u}) outside a {frames}-frame clip/GOP pair"
        )));
    }
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(DvtError::config(format!("patch {patch} does not tile {h}x{w}")));
    }
    let (lo, hi) = (t.min(u), t.max(u));
    let n = h * w;
    let field: Vec<f64> = match kind {
        CueKind::Md => md_pixel_field(gop, t, u, mode)
            .into_iter()
            .map(|v| v / patch as f64)
            .collect(),
        CueKind::RgbR => {
            let mut acc = vec![0.0f64; n * 3];
            for k in lo + 1..=hi {
                if let Some(res) = gop.residual(k) {
                    for (i, a) in acc.iter_mut().enumerate() {
                        *a += f64::from(res.value(i));
                    }
                }
            }
            if u < t {
                acc.iter_mut().for_each(|a| *a = -*a);
            }
            acc
        }
        CueKind::RgbD => clip
            .frame(u)
            .iter()
            .zip(clip.frame(t))
            .map(|(&a, &b)| f64::from(a) - f64::from(b))
            .collect(),
        CueKind::AvgPRgb => {
            let mut acc = vec![0.0f64; n * 3];
            for k in lo..=hi {
                acc.iter_mut().zip(clip.frame(k)).for_each(|(a, &v)| *a += f64::from(v));
            }
            let count = (hi - lo + 1) as f64;
            acc.iter_mut().for_each(|a| *a /= count);
            acc
        }
    };
    Ok(to_patch_rows(&field, h, w, kind.channels(), patch))
}

/// Learnable linear tokenization of a patch cue into `D` dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MotionTokenizer {
    pub weight: ParamId,
    pub kind: CueKind,
}

impl MotionTokenizer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &Rng,
        prefix: &str,
        kind: CueKind,
        patch: usize,
        dim: usize,
    ) -> Self {
        let name = format!("{prefix}.cue_weight");
        let bound = 1.0 / (dim as f64).sqrt();
        let weight = store.add(
            name.clone(),
            rng.split_named(&name)
                .uniform_tensor(&[kind.patch_dim(patch), dim], -bound, bound),
        );
        MotionTokenizer { weight, kind }
    }
}

/// `m = cue · W_cue`, i.e. `[rows × cue_dim] → [rows × D]`.
pub fn tokenize_cue<'t, T: Scalar>(cue: Var<'t, T>, weight: Var<'t, T>) -> Result<Var<'t, T>> {
    cue.matmul(weight)
}
