//! Parameter handles of every attention flavour and their initialisers.

use crate::motioncue::{CueKind, MotionTokenizer};
use crate::numerics::{ParamId, ParamStore, Rng, Scalar, Tensor};

use super::{AttnConfig, FusionMode};

pub(crate) fn uniform<T: Scalar>(
    store: &mut ParamStore<T>,
    rng: &Rng,
    name: String,
    shape: &[usize],
    bound: f64,
) -> ParamId {
    let t = rng.split_named(&name).uniform_tensor(shape, -bound, bound);
    store.add(name, t)
}

pub(crate) fn zeros<T: Scalar>(store: &mut ParamStore<T>, name: String, shape: &[usize]) -> ParamId {
    store.add(name, Tensor::zeros(shape))
}

fn inv_sqrt(n: usize) -> f64 {
    1.0 / (n as f64).sqrt()
}

/// Dense query/key/value projections of the baselines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct QkvParams {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
}

impl QkvParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, rng: &Rng, prefix: &str, dim: usize) -> Self {
        let b = inv_sqrt(dim);
        QkvParams {
            wq: uniform(store, rng, format!("{prefix}.wq"), &[dim, dim], b),
            wk: uniform(store, rng, format!("{prefix}.wk"), &[dim, dim], b),
            wv: uniform(store, rng, format!("{prefix}.wv"), &[dim, dim], b),
        }
    }
}

/// Deformable space-time attention. `w_delta` is `[D × heads·2N]` with
/// columns `(h·N + n)·2 + {0: dy, 1: dx}`; `w_alpha` is `[D × heads·N]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeformParams {
    pub wq: ParamId,
    pub wv: ParamId,
    pub w_delta: ParamId,
    pub w_alpha: ParamId,
    pub tokenizer: MotionTokenizer,
}

impl DeformParams {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &Rng,
        prefix: &str,
        dim: usize,
        cfg: &AttnConfig,
        cue: CueKind,
        patch: usize,
    ) -> Self {
        let b = inv_sqrt(dim);
        let hn = cfg.heads * cfg.samples;
        DeformParams {
            wq: uniform(store, rng, format!("{prefix}.wq"), &[dim, dim], b),
            wv: uniform(store, rng, format!("{prefix}.wv"), &[dim, dim], b),
            w_delta: zeros(store, format!("{prefix}.w_delta"), &[dim, 2 * hn]),
            w_alpha: zeros(store, format!("{prefix}.w_alpha"), &[dim, hn]),
            tokenizer: MotionTokenizer::init(store, rng, prefix, cue, patch, dim),
        }
    }
}

/// One feature scale of multi-scale attention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScaleParams {
    pub stride: usize,
    /// `[3, 3, 3, D, D]`.
    pub conv: ParamId,
    pub wq: ParamId,
    pub wv: ParamId,
    pub w_delta: ParamId,
    pub w_alpha: ParamId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MultiScaleParams {
    pub scales: Vec<ScaleParams>,
}

impl MultiScaleParams {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, rng: &Rng, prefix: &str, dim: usize, cfg: &AttnConfig) -> Self {
        let b = inv_sqrt(dim);
        let hn = cfg.heads * cfg.ms_samples;
        let scales = (0..cfg.scales)
            .map(|f| ScaleParams {
                stride: cfg.stride(f),
                conv: uniform(
                    store,
                    rng,
                    format!("{prefix}.s{f}.conv"),
                    &[3, 3, 3, dim, dim],
                    inv_sqrt(27 * dim),
                ),
                wq: uniform(store, rng, format!("{prefix}.s{f}.wq"), &[dim, dim], b),
                wv: uniform(store, rng, format!("{prefix}.s{f}.wv"), &[dim, dim], b),
                w_delta: zeros(store, format!("{prefix}.s{f}.w_delta"), &[dim, 2 * hn]),
                w_alpha: zeros(store, format!("{prefix}.s{f}.w_alpha"), &[dim, hn]),
            })
            .collect();
        MultiScaleParams { scales }
    }
}

/// Output projection applied to the concatenated heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OutProj {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl OutProj {
    pub fn init<T: Scalar>(store: &mut ParamStore<T>, rng: &Rng, prefix: &str, dim: usize) -> Self {
        OutProj {
            weight: uniform(store, rng, format!("{prefix}.out_weight"), &[dim, dim], inv_sqrt(dim)),
            bias: zeros(store, format!("{prefix}.out_bias"), &[dim]),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FusionParams {
    /// `[2D × D]` weight and `[D]` bias.
    Linear { weight: ParamId, bias: ParamId },
    /// `2D → 2Dρ → GELU → D`.
    Mixer {
        w1: ParamId,
        b1: ParamId,
        w2: ParamId,
        b2: ParamId,
    },
}

impl FusionParams {
    /// The linear variant starts as the branch average `[½I; ½I]`.
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &Rng,
        prefix: &str,
        dim: usize,
        mode: FusionMode,
        rho: usize,
    ) -> Self {
        match mode {
            FusionMode::Linear => {
                let half = T::lit(0.5);
                let w = Tensor::from_fn(&[2 * dim, dim], |i| {
                    let (r, c) = (i / dim, i % dim);
                    if r % dim == c {
                        half
                    } else {
                        T::zero()
                    }
                });
                FusionParams::Linear {
                    weight: store.add(format!("{prefix}.fuse_weight"), w),
                    bias: zeros(store, format!("{prefix}.fuse_bias"), &[dim]),
                }
            }
            FusionMode::Mixer => {
                let hidden = 2 * dim * rho;
                FusionParams::Mixer {
                    w1: uniform(
                        store,
                        rng,
                        format!("{prefix}.mix_w1"),
                        &[2 * dim, hidden],
                        inv_sqrt(2 * dim),
                    ),
                    b1: zeros(store, format!("{prefix}.mix_b1"), &[hidden]),
                    w2: uniform(store, rng, format!("{prefix}.mix_w2"), &[hidden, dim], inv_sqrt(hidden)),
                    b2: zeros(store, format!("{prefix}.mix_b2"), &[dim]),
                }
            }
        }
    }
}
