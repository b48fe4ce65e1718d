//! Deformable space-time attention: each query samples `N` motion-guided
//! locations in every frame of its sub-clip, with one softmax over all of
//! them.

use std::rc::Rc;

use crate::error::{DvtError, Result};
use crate::motioncue::{CueBank, SubClips};
use crate::numerics::{Bound, Scalar, Var};
use crate::tokenization::{GridGeom, TokenGrid};

use super::deform::{deform_aggregate, Gathered, SamplePlan, SlotSource};
use super::dense::residual;
use super::{AttentionTrace, AttnConfig, DeformParams, OpCounter};

/// `Δ = (q + m)·W_delta`, `α̂ = (q + m)·W_alpha`.
pub fn dsta_offsets<'t, T: Scalar>(
    q: Var<'t, T>,
    m: Var<'t, T>,
    w_delta: Var<'t, T>,
    w_alpha: Var<'t, T>,
) -> Result<(Var<'t, T>, Var<'t, T>)> {
    if q.shape() != m.shape() {
        return Err(DvtError::shape("dsta_offsets", &q.shape(), &m.shape()));
    }
    let u = q.add(m)?;
    Ok((u.matmul(w_delta)?, u.matmul(w_alpha)?))
}

/// Sampling layout for query `t·S + s` and slot `j·N + n`, reading frame
/// `j` of `t`'s sub-clip at the query's own site plus offset.
pub(crate) fn dsta_plan(geom: &GridGeom, subclips: &SubClips, heads: usize, samples: usize) -> SamplePlan {
    let s_count = geom.sites();
    let span = subclips.len();
    let slots = span * samples;
    let queries = geom.tokens();
    let mut sources = Vec::with_capacity(queries * slots);
    let mut offset_index = Vec::with_capacity(queries * heads * slots);
    let mut logit_index = Vec::with_capacity(queries * heads * slots);
    let hn = heads * samples;
    for t in 0..geom.frames {
        let start = subclips.range_of(t).start;
        for s in 0..s_count {
            // Token centres sit at half-integers; grid node (r, c) is centre (r+½, c+½).
            let (cy, cx) = geom.center(s);
            for j in 0..span {
                for _ in 0..samples {
                    sources.push(SlotSource {
                        grid: 0,
                        frame: start + j,
                        y: cy - 0.5,
                        x: cx - 0.5,
                    });
                }
            }
            for h in 0..heads {
                for j in 0..span {
                    let pair = (t * span + j) * s_count + s;
                    for n in 0..samples {
                        offset_index.push(pair * 2 * hn + (h * samples + n) * 2);
                        logit_index.push(pair * hn + h * samples + n);
                    }
                }
            }
        }
    }
    SamplePlan {
        queries,
        heads,
        slots,
        sources,
        offset_index,
        logit_index,
    }
}

/// `Σ α·v` for every token, heads side by side: `[T'·S × D]`.
pub fn dsta_aggregate<'t, T: Scalar>(
    x: &TokenGrid<'t, T>,
    cues: &CueBank<T>,
    params: &DeformParams,
    bound: &Bound<'t, T>,
    cfg: &AttnConfig,
    counter: Option<&OpCounter>,
) -> Result<Gathered<'t, T>> {
    let geom = x.geom;
    let d = x.dim();
    cfg.validate(&geom, d)?;
    let subclips = SubClips::new(geom.frames, cfg.subclips)?;
    if cues.subclips != subclips || cues.sites != geom.sites() {
        return Err(DvtError::config(format!(
            "cue bank built for {} frames / {} sub-clips / {} sites, tokens have {} / {} / {}",
            cues.subclips.frames,
            cues.subclips.count,
            cues.sites,
            geom.frames,
            subclips.count,
            geom.sites()
        )));
    }
    let (s_count, span) = (geom.sites(), subclips.len());
    let rows = x.tokens.reshape(&[geom.tokens(), d])?;
    let q = rows.matmul(bound[params.wq])?;
    let v = rows.matmul(bound[params.wv])?;
    let vd = v.value().last_dim();
    let v = v.reshape(&[geom.frames, geom.grid_h, geom.grid_w, vd])?;
    let tape = rows.tape();
    let m = tape
        .constant(cues.data.clone())
        .matmul(bound[params.tokenizer.weight])?;
    let index: Vec<usize> = (0..geom.frames)
        .flat_map(|t| (0..span).flat_map(move |_| (0..s_count).map(move |s| t * s_count + s)))
        .collect();
    let src = if cfg.offset_from_raw_token { rows } else { q };
    let (offsets, logits) = dsta_offsets(
        src.gather_rows(Rc::new(index))?,
        m,
        bound[params.w_delta],
        bound[params.w_alpha],
    )?;
    let plan = Rc::new(dsta_plan(&geom, &subclips, cfg.heads, cfg.samples));
    deform_aggregate(&[v], plan, offsets, logits, counter)
}

/// Bare operator `ẑ = z + Σ α·v` with its sampling trace.
pub fn dsta_forward<'t, T: Scalar>(
    tokens: &TokenGrid<'t, T>,
    cues: &CueBank<T>,
    params: &DeformParams,
    bound: &Bound<'t, T>,
    cfg: &AttnConfig,
    counter: Option<&OpCounter>,
) -> Result<(TokenGrid<'t, T>, AttentionTrace)> {
    let g = dsta_aggregate(tokens, cues, params, bound, cfg, counter)?;
    let slots = cues.span() * cfg.samples;
    let trace = AttentionTrace::from_records(0, tokens.geom.sites(), cfg.heads, slots, &g.records);
    Ok((tokens.with_tokens(residual(tokens, g.out)?)?, trace))
}
