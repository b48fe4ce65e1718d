//! One attention sub-layer of any scheme: heads, output projection and the
//! single residual, plus the two-branch fused variant.

use crate::error::{DvtError, Result};
use crate::motioncue::{CueBank, CueKind};
use crate::numerics::{Bound, ParamStore, Rng, Scalar, Var};
use crate::tokenization::TokenGrid;

use super::dense::{dense_aggregate, residual, Axis};
use super::{
    dmsa_aggregate, dsta_aggregate, fuse, AttentionTrace, AttnConfig, DeformParams, FusionParams, MultiScaleParams,
    OpCounter, OutProj, QkvParams, Scheme,
};

/// `z + agg·W_o + b_o`: the output projection of concatenated heads and the
/// sub-layer residual.
pub fn multi_head<'t, T: Scalar>(
    z: &TokenGrid<'t, T>,
    agg: Var<'t, T>,
    out: &OutProj,
    bound: &Bound<'t, T>,
) -> Result<TokenGrid<'t, T>> {
    let proj = agg.linear(bound[out.weight], Some(bound[out.bias]))?;
    z.with_tokens(residual(z, proj)?)
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Dense {
        axis: Axis,
        qkv: QkvParams,
        out: OutProj,
    },
    Dsta {
        deform: DeformParams,
        out: OutProj,
    },
    Dmsa {
        ms: MultiScaleParams,
        out: OutProj,
    },
    DstMs {
        deform: DeformParams,
        out_st: OutProj,
        ms: MultiScaleParams,
        out_ms: OutProj,
        fusion: FusionParams,
    },
}

/// Per-call side inputs.
#[derive(Clone, Copy, Default)]
pub struct LayerContext<'a, T> {
    pub cues: Option<&'a CueBank<T>>,
    pub counter: Option<&'a OpCounter>,
    /// Layer index recorded in traces; `None` skips trace construction.
    pub trace_layer: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AttentionLayer {
    pub cfg: AttnConfig,
    pub params: LayerParams,
}

impl AttentionLayer {
    pub fn init<T: Scalar>(
        store: &mut ParamStore<T>,
        rng: &Rng,
        prefix: &str,
        dim: usize,
        cfg: AttnConfig,
        cue: CueKind,
        patch: usize,
    ) -> Self {
        let dense = |store: &mut ParamStore<T>, axis| LayerParams::Dense {
            axis,
            qkv: QkvParams::init(store, rng, prefix, dim),
            out: OutProj::init(store, rng, prefix, dim),
        };
        let params = match cfg.scheme {
            Scheme::Global => dense(store, Axis::All),
            Scheme::Space => dense(store, Axis::Space),
            Scheme::Time => dense(store, Axis::Time),
            Scheme::Dsta => LayerParams::Dsta {
                deform: DeformParams::init(store, rng, prefix, dim, &cfg, cue, patch),
                out: OutProj::init(store, rng, prefix, dim),
            },
            Scheme::Dmsa => LayerParams::Dmsa {
                ms: MultiScaleParams::init(store, rng, prefix, dim, &cfg),
                out: OutProj::init(store, rng, prefix, dim),
            },
            Scheme::DstMs => {
                let st = format!("{prefix}.st");
                let ms = format!("{prefix}.ms");
                LayerParams::DstMs {
                    deform: DeformParams::init(store, rng, &st, dim, &cfg, cue, patch),
                    out_st: OutProj::init(store, rng, &st, dim),
                    ms: MultiScaleParams::init(store, rng, &ms, dim, &cfg),
                    out_ms: OutProj::init(store, rng, &ms, dim),
                    fusion: FusionParams::init(store, rng, prefix, dim, cfg.fusion, cfg.rho),
                }
            }
        };
        AttentionLayer { cfg, params }
    }

    /// `normed` is the layer-normalised input, `z` the residual stream.
    pub fn forward<'t, T: Scalar>(
        &self,
        normed: &TokenGrid<'t, T>,
        z: &TokenGrid<'t, T>,
        bound: &Bound<'t, T>,
        ctx: LayerContext<'_, T>,
    ) -> Result<(TokenGrid<'t, T>, Option<AttentionTrace>)> {
        let cfg = &self.cfg;
        let sites = z.geom.sites();
        let cues = || {
            ctx.cues
                .ok_or_else(|| DvtError::config("deformable space-time attention needs motion cues"))
        };
        let trace_of = |records: &[super::SampleRecord], slots: usize| {
            ctx.trace_layer
                .map(|layer| AttentionTrace::from_records(layer, sites, cfg.heads, slots, records))
        };
        match &self.params {
            LayerParams::Dense { axis, qkv, out } => {
                let agg = dense_aggregate(normed, qkv, bound, cfg.heads, *axis, ctx.counter)?;
                Ok((multi_head(z, agg, out, bound)?, None))
            }
            LayerParams::Dsta { deform, out } => {
                let cues = cues()?;
                let g = dsta_aggregate(normed, cues, deform, bound, cfg, ctx.counter)?;
                let trace = trace_of(&g.records, cues.span() * cfg.samples);
                Ok((multi_head(z, g.out, out, bound)?, trace))
            }
            LayerParams::Dmsa { ms, out } => {
                let g = dmsa_aggregate(normed, ms, bound, cfg, ctx.counter)?;
                let trace = trace_of(&g.records, ms.scales.len() * cfg.ms_samples);
                Ok((multi_head(z, g.out, out, bound)?, trace))
            }
            LayerParams::DstMs {
                deform,
                out_st,
                ms,
                out_ms,
                fusion,
            } => {
                let cues = cues()?;
                let gst = dsta_aggregate(normed, cues, deform, bound, cfg, ctx.counter)?;
                let gms = dmsa_aggregate(normed, ms, bound, cfg, ctx.counter)?;
                let mut trace = trace_of(&gst.records, cues.span() * cfg.samples);
                if let (Some(t), Some(m)) = (trace.as_mut(), trace_of(&gms.records, ms.scales.len() * cfg.ms_samples)) {
                    t.extend(m);
                }
                let z_st = multi_head(z, gst.out, out_st, bound)?;
                let z_ms = multi_head(z, gms.out, out_ms, bound)?;
                Ok((fuse(&z_st, &z_ms, fusion, bound)?, trace))
            }
        }
    }
}
