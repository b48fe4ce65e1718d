//! Dense softmax attention over all tokens, within frames, or across frames
//! at a fixed site. No `1/√d` logit scaling.

use crate::error::Result;
use crate::numerics::{concat_cols, Bound, Scalar, Var};
use crate::tokenization::TokenGrid;

use super::{OpCounter, QkvParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Every token attends to every token.
    All,
    /// Tokens of the same frame.
    Space,
    /// Tokens of the same site.
    Time,
}

fn attend<'t, T: Scalar>(q: Var<'t, T>, k: Var<'t, T>, v: Var<'t, T>) -> Result<Var<'t, T>> {
    q.bmm(k, true)?.softmax_last().bmm(v, false)
}

/// Per-head aggregation `Σ α·v`, heads concatenated: `[T'·S × D]` rows in
/// token order.
pub fn dense_aggregate<'t, T: Scalar>(
    x: &TokenGrid<'t, T>,
    qkv: &QkvParams,
    bound: &Bound<'t, T>,
    heads: usize,
    axis: Axis,
    counter: Option<&OpCounter>,
) -> Result<Var<'t, T>> {
    let (t, s, d) = (x.geom.frames, x.geom.sites(), x.dim());
    let rows = x.tokens.reshape(&[t * s, d])?;
    let q = rows.matmul(bound[qkv.wq])?;
    let k = rows.matmul(bound[qkv.wk])?;
    let v = rows.matmul(bound[qkv.wv])?;
    let hd = d / heads;
    let mut outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let split = |m: Var<'t, T>| m.slice_cols(h * hd, hd);
        let (qh, kh, vh) = (split(q)?, split(k)?, split(v)?);
        let out = match axis {
            Axis::All => {
                let r = |m: Var<'t, T>| m.reshape(&[1, t * s, hd]);
                attend(r(qh)?, r(kh)?, r(vh)?)?
            }
            Axis::Space => {
                let r = |m: Var<'t, T>| m.reshape(&[t, s, hd]);
                attend(r(qh)?, r(kh)?, r(vh)?)?
            }
            Axis::Time => {
                let r = |m: Var<'t, T>| m.reshape(&[t, s, hd])?.swap_leading();
                attend(r(qh)?, r(kh)?, r(vh)?)?.swap_leading()?
            }
        };
        outs.push(out.reshape(&[t * s, hd])?);
    }
    if let Some(c) = counter {
        let (t, s) = (t as u64, s as u64);
        c.add(match axis {
            Axis::All => (t * s) * (t * s),
            Axis::Space => t * s * s,
            Axis::Time => s * t * t,
        });
    }
    concat_cols(&outs)
}

/// `ẑ = z + Σ α·v` with α a softmax over every token of the clip.
pub fn global_st_attention<'t, T: Scalar>(
    tokens: &TokenGrid<'t, T>,
    qkv: &QkvParams,
    bound: &Bound<'t, T>,
    heads: usize,
    counter: Option<&OpCounter>,
) -> Result<TokenGrid<'t, T>> {
    let agg = dense_aggregate(tokens, qkv, bound, heads, Axis::All, counter)?;
    tokens.with_tokens(residual(tokens, agg)?)
}

/// Divided attention restricted to one frame ([`Axis::Space`]) or one site
/// ([`Axis::Time`]), with residual.
pub fn divided_attention<'t, T: Scalar>(
    tokens: &TokenGrid<'t, T>,
    qkv: &QkvParams,
    bound: &Bound<'t, T>,
    heads: usize,
    axis: Axis,
    counter: Option<&OpCounter>,
) -> Result<TokenGrid<'t, T>> {
    let agg = dense_aggregate(tokens, qkv, bound, heads, axis, counter)?;
    tokens.with_tokens(residual(tokens, agg)?)
}

pub(crate) fn residual<'t, T: Scalar>(tokens: &TokenGrid<'t, T>, agg: Var<'t, T>) -> Result<Var<'t, T>> {
    let d = tokens.dim();
    tokens.tokens.reshape(&[tokens.geom.tokens(), d])?.add(agg)
}
