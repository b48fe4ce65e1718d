//! Deformable multi-scale attention: per query, `N_ms` samples in each of `F`
//! same-frame feature maps of decreasing resolution, one joint softmax.

use std::rc::Rc;

use crate::error::Result;
use crate::numerics::{concat_rows, conv3d, Bound, Scalar, Tensor, Var};
use crate::tokenization::{GridGeom, TokenGrid};

use super::deform::{deform_aggregate, Gathered, SamplePlan, SlotSource};
use super::dense::residual;
use super::{AttentionTrace, AttnConfig, MultiScaleParams, OpCounter};

/// Query site `(row, col)` in the node-index space of a map with spatial
/// stride `r`. Output node `i` of the padded 3-tap convolution is centred on
/// input node `i·r`.
fn scaled_site(geom: &GridGeom, s: usize, stride: usize) -> (f64, f64) {
    let (row, col) = geom.address(s);
    (row as f64 / stride as f64, col as f64 / stride as f64)
}

/// Samples every frame of `feat` at each token's scaled site: `[T'·S × D]`.
fn query_features<'t, T: Scalar>(feat: Var<'t, T>, geom: &GridGeom, stride: usize) -> Result<Var<'t, T>> {
    let d = feat.value().last_dim();
    if stride == 1 {
        return feat.reshape(&[geom.tokens(), d]);
    }
    let n = geom.tokens();
    let sources = (0..n)
        .map(|i| {
            let (y, x) = scaled_site(geom, i % geom.sites(), stride);
            SlotSource {
                grid: 0,
                frame: i / geom.sites(),
                y,
                x,
            }
        })
        .collect();
    let plan = SamplePlan {
        queries: n,
        heads: 1,
        slots: 1,
        sources,
        offset_index: (0..n).map(|i| 2 * i).collect(),
        logit_index: (0..n).collect(),
    };
    let tape = feat.tape();
    let zero_off = tape.constant(Tensor::zeros(&[n, 2]));
    let zero_logit = tape.constant(Tensor::zeros(&[n, 1]));
    Ok(deform_aggregate(&[feat], Rc::new(plan), zero_off, zero_logit, None)?.out)
}

fn dmsa_plan(geom: &GridGeom, strides: &[usize], heads: usize, samples: usize) -> SamplePlan {
    let queries = geom.tokens();
    let scales = strides.len();
    let slots = scales * samples;
    let hn = heads * samples;
    let mut sources = Vec::with_capacity(queries * slots);
    let mut offset_index = Vec::with_capacity(queries * heads * slots);
    let mut logit_index = Vec::with_capacity(queries * heads * slots);
    for i in 0..queries {
        let (t, s) = (i / geom.sites(), i % geom.sites());
        for (f, &r) in strides.iter().enumerate() {
            let (y, x) = scaled_site(geom, s, r);
            for _ in 0..samples {
                sources.push(SlotSource {
                    grid: f,
                    frame: t,
                    y,
                    x,
                });
            }
        }
        for h in 0..heads {
            for f in 0..scales {
                let row = f * queries + i;
                for n in 0..samples {
                    offset_index.push(row * 2 * hn + (h * samples + n) * 2);
                    logit_index.push(row * hn + h * samples + n);
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

/// `Σ_f Σ_n α·v` for every token, heads side by side: `[T'·S × D]`.
pub fn dmsa_aggregate<'t, T: Scalar>(
    x: &TokenGrid<'t, T>,
    params: &MultiScaleParams,
    bound: &Bound<'t, T>,
    cfg: &AttnConfig,
    counter: Option<&OpCounter>,
) -> Result<Gathered<'t, T>> {
    let geom = x.geom;
    let d = x.dim();
    let check = AttnConfig {
        scheme: super::Scheme::Dmsa,
        scales: params.scales.len(),
        ..*cfg
    };
    check.validate(&geom, d)?;
    let maps = x.tokens.reshape(&[geom.frames, geom.grid_h, geom.grid_w, d])?;
    let mut values = Vec::with_capacity(params.scales.len());
    let mut offsets = Vec::with_capacity(params.scales.len());
    let mut logits = Vec::with_capacity(params.scales.len());
    for sp in &params.scales {
        let feat = conv3d(maps, bound[sp.conv], [1, sp.stride, sp.stride])?;
        let q = query_features(feat, &geom, sp.stride)?.matmul(bound[sp.wq])?;
        values.push(feat.matmul(bound[sp.wv])?);
        offsets.push(q.matmul(bound[sp.w_delta])?);
        logits.push(q.matmul(bound[sp.w_alpha])?);
    }
    let strides: Vec<usize> = params.scales.iter().map(|s| s.stride).collect();
    let plan = Rc::new(dmsa_plan(&geom, &strides, cfg.heads, cfg.ms_samples));
    deform_aggregate(&values, plan, concat_rows(&offsets)?, concat_rows(&logits)?, counter)
}

/// Bare operator `ẑ = z + Σ_f Σ_n α·v` with its sampling trace.
pub fn dmsa_forward<'t, T: Scalar>(
    tokens: &TokenGrid<'t, T>,
    params: &MultiScaleParams,
    bound: &Bound<'t, T>,
    cfg: &AttnConfig,
    counter: Option<&OpCounter>,
) -> Result<(TokenGrid<'t, T>, AttentionTrace)> {
    let g = dmsa_aggregate(tokens, params, bound, cfg, counter)?;
    let slots = params.scales.len() * cfg.ms_samples;
    let trace = AttentionTrace::from_records(0, tokens.geom.sites(), cfg.heads, slots, &g.records);
    Ok((tokens.with_tokens(residual(tokens, g.out)?)?, trace))
}
