//! Clip → token grid: non-overlapping patch (or tubelet) flattening, a
//! learnable linear embedding and additive spatial/temporal positional tables.

mod clip;

use std::rc::Rc;

pub use clip::{read_clip, read_clip_bytes, write_clip, write_clip_bytes, ClipTensor, CLIP_MAGIC};

use crate::error::{DvtError, Result};
use crate::numerics::{ParamId, ParamStore, Rng, Scalar, Tensor, Var};

/// Shape of a token grid: `frames` token-frames of `grid_h × grid_w` sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GridGeom {
    pub frames: usize,
    pub grid_h: usize,
    pub grid_w: usize,
}

impl GridGeom {
    pub fn sites(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn tokens(&self) -> usize {
        self.frames * self.sites()
    }

    pub fn site(&self, row: usize, col: usize) -> usize {
        row * self.grid_w + col
    }

    pub fn address(&self, s: usize) -> (usize, usize) {
        (s / self.grid_w, s % self.grid_w)
    }

    /// Patch centre `p(s)` in patch-grid units.
    pub fn center(&self, s: usize) -> (f64, f64) {
        let (r, c) = self.address(s);
        (r as f64 + 0.5, c as f64 + 0.5)
    }

    pub fn token(&self, t: usize, s: usize) -> usize {
        t * self.sites() + s
    }
}

/// Tokens `[frames × S × D]` on a tape with their grid geometry.
#[derive(Clone, Copy, Debug)]
pub struct TokenGrid<'t, T: Scalar> {
    pub tokens: Var<'t, T>,
    pub geom: GridGeom,
}

impl<'t, T: Scalar> TokenGrid<'t, T> {
    pub fn new(tokens: Var<'t, T>, geom: GridGeom) -> Result<Self> {
        let shape = tokens.shape();
        if shape.len() != 3 || shape[0] != geom.frames || shape[1] != geom.sites() {
            return Err(DvtError::shape("token grid", &shape, &[geom.frames, geom.sites()]));
        }
        Ok(TokenGrid { tokens, geom })
    }

    pub fn dim(&self) -> usize {
        self.tokens.shape()[2]
    }

    /// Replaces the tokens keeping the geometry; `tokens` may be any layout
    /// with `frames·S` rows.
    pub fn with_tokens(&self, tokens: Var<'t, T>) -> Result<Self> {
        let d = tokens.value().last_dim();
        let tokens = tokens.reshape(&[self.geom.frames, self.geom.sites(), d])?;
        TokenGrid::new(tokens, self.geom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    pub patch: usize,
    pub tubelet: usize,
}

impl PatchSpec {
    pub fn patch_dim(&self) -> usize {
        self.patch * self.patch * 3 * self.tubelet
    }

    pub fn geom(&self, t: usize, h: usize, w: usize) -> Result<GridGeom> {
        if self.patch == 0 || self.tubelet == 0 {
            return Err(DvtError::config("patch size and tubelet depth must be >= 1"));
        }
        if !h.is_multiple_of(self.patch) || !w.is_multiple_of(self.patch) {
            return Err(DvtError::config(format!(
                "frame {h}x{w} not divisible by patch size {}",
                self.patch
            )));
        }
        if !t.is_multiple_of(self.tubelet) {
            return Err(DvtError::config(format!(
                "{t} frames not divisible by tubelet depth {}",
                self.tubelet
            )));
        }
        Ok(GridGeom {
            frames: t / self.tubelet,
            grid_h: h / self.patch,
            grid_w: w / self.patch,
        })
    }
}

/// Flattens non-overlapping cuboids in `(dt, dy, dx, channel)` order:
/// `[T' × S × (depth·P·P·3)]`.
pub fn patchify<T: Scalar>(clip: &ClipTensor, spec: PatchSpec) -> Result<Tensor<T>> {
    let (t, h, w) = clip.dims();
    let geom = spec.geom(t, h, w)?;
    let p = spec.patch;
    let dim = spec.patch_dim();
    let frames = clip.frames.data();
    let mut out = Vec::with_capacity(geom.tokens() * dim);
    for tt in 0..geom.frames {
        for s in 0..geom.sites() {
            let (row, col) = geom.address(s);
            for dt in 0..spec.tubelet {
                let f = tt * spec.tubelet + dt;
                for dy in 0..p {
                    let y = row * p + dy;
                    let base = ((f * h + y) * w + col * p) * 3;
                    out.extend(frames[base..base + p * 3].iter().map(|&v| T::lit(f64::from(v))));
                }
            }
        }
    }
    Ok(Tensor::from_parts(vec![geom.frames, geom.sites(), dim], out))
}

/// Learnable spatial (`e_s`) and temporal (`e^t`) positional encodings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PositionalTables {
    pub spatial: ParamId,
    pub temporal: ParamId,
}

/// Linear patch embedding plus positional tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Embedding {
    pub weight: ParamId,
    pub pos: PositionalTables,
    pub geom: GridGeom,
    pub spec: PatchSpec,
}

impl Embedding {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, rng: &Rng, spec: PatchSpec, geom: GridGeom, dim: usize) -> Self {
        let bound = 1.0 / (dim as f64).sqrt();
        let weight = store.add(
            "embed.weight",
            rng.split_named("embed.weight")
                .uniform_tensor(&[spec.patch_dim(), dim], -bound, bound),
        );
        let spatial = store.add(
            "embed.pos_spatial",
            rng.split_named("embed.pos_spatial")
                .uniform_tensor(&[geom.sites(), dim], -bound, bound),
        );
        let temporal = store.add(
            "embed.pos_temporal",
            rng.split_named("embed.pos_temporal")
                .uniform_tensor(&[geom.frames, dim], -bound, bound),
        );
        Embedding {
            weight,
            pos: PositionalTables { spatial, temporal },
            geom,
            spec,
        }
    }
}

/// `z_s^t = x_s^t·W + e_s + e^t` over patches `[T' × S × K]`.
pub fn embed<'t, T: Scalar>(
    patches: Var<'t, T>,
    weight: Var<'t, T>,
    spatial: Var<'t, T>,
    temporal: Var<'t, T>,
    geom: GridGeom,
) -> Result<TokenGrid<'t, T>> {
    let ps = patches.shape();
    let (es, et) = (spatial.shape(), temporal.shape());
    if ps.len() != 3 || es.len() != 2 || et.len() != 2 || es[0] != ps[1] || et[0] != ps[0] || es[1] != et[1] {
        return Err(DvtError::shape("embed", &ps, &[es, et].concat()));
    }
    let (frames, sites) = (ps[0], ps[1]);
    let x = patches.matmul(weight)?;
    let d = x.value().last_dim();
    if d != es[1] {
        return Err(DvtError::shape("embed", &x.shape(), &es));
    }
    let site_index: Rc<Vec<usize>> = Rc::new((0..frames * sites).map(|i| i % sites).collect());
    let frame_index: Rc<Vec<usize>> = Rc::new((0..frames * sites).map(|i| i / sites).collect());
    let z = x
        .reshape(&[frames * sites, d])?
        .add(spatial.gather_rows(site_index)?)?
        .add(temporal.gather_rows(frame_index)?)?
        .reshape(&[frames, sites, d])?;
    TokenGrid::new(z, geom)
}
