//! Attention schemes over a token grid: dense global and divided baselines,
//! deformable space-time and multi-scale attention, their fusion and the
//! multi-head sub-layer wrapper.

mod config;
mod counter;
mod deform;
mod dense;
mod dmsa;
mod dsta;
mod fusion;
mod layer;
mod params;
mod trace;

pub use config::{AttnConfig, FusionMode, Scheme};
pub use counter::OpCounter;
pub use deform::{deform_aggregate, Gathered, SamplePlan, SampleRecord, SlotSource};
pub use dense::{dense_aggregate, divided_attention, global_st_attention, Axis};
pub use dmsa::{dmsa_aggregate, dmsa_forward};
pub use dsta::{dsta_aggregate, dsta_forward, dsta_offsets};
pub use fusion::fuse;
pub use layer::{multi_head, AttentionLayer, LayerContext, LayerParams};
pub use params::{DeformParams, FusionParams, MultiScaleParams, OutProj, QkvParams, ScaleParams};
pub use trace::{AttentionTrace, TraceRecord, TraceSample};

pub(crate) use params::{uniform, zeros};
