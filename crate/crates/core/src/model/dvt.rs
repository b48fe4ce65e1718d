//! The full network: patch embedding, `L` pre-norm blocks of attention and
//! MLP, mean pooling and a linear classifier.

use crate::attention::{AttentionLayer, AttentionTrace, LayerContext, OpCounter, Scheme};
use crate::error::{DvtError, Result};
use crate::motioncue::{block_match_encode, build_cue_bank, CueBank, GopClip, SubClips};
use crate::numerics::{Bound, ParamId, ParamStore, Rng, Scalar, Tensor, Var};
use crate::tokenization::{embed, patchify, ClipTensor, Embedding, GridGeom, TokenGrid};

use super::ModelConfig;
use crate::attention::{uniform, zeros};

pub const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerNormParams {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNormParams {
    fn init<T: Scalar>(store: &mut ParamStore<T>, prefix: &str, dim: usize) -> Self {
        LayerNormParams {
            gamma: store.add(format!("{prefix}.gamma"), Tensor::full(&[dim], T::one())),
            beta: zeros(store, format!("{prefix}.beta"), &[dim]),
        }
    }

    fn apply<'t, T: Scalar>(&self, x: Var<'t, T>, bound: &Bound<'t, T>) -> Result<Var<'t, T>> {
        x.layer_norm(bound[self.gamma], bound[self.beta], T::lit(LN_EPS))
    }
}

/// `D → ratio·D → GELU → D`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    fn init<T: Scalar>(store: &mut ParamStore<T>, rng: &Rng, prefix: &str, dim: usize, ratio: usize) -> Self {
        let hidden = dim * ratio;
        Mlp {
            w1: uniform(
                store,
                rng,
                format!("{prefix}.w1"),
                &[dim, hidden],
                1.0 / (dim as f64).sqrt(),
            ),
            b1: zeros(store, format!("{prefix}.b1"), &[hidden]),
            w2: uniform(
                store,
                rng,
                format!("{prefix}.w2"),
                &[hidden, dim],
                1.0 / (hidden as f64).sqrt(),
            ),
            b2: zeros(store, format!("{prefix}.b2"), &[dim]),
        }
    }

    fn apply<'t, T: Scalar>(&self, x: Var<'t, T>, bound: &Bound<'t, T>) -> Result<Var<'t, T>> {
        x.linear(bound[self.w1], Some(bound[self.b1]))?
            .gelu()
            .linear(bound[self.w2], Some(bound[self.b2]))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub ln1: LayerNormParams,
    pub attn: AttentionLayer,
    pub ln2: LayerNormParams,
    pub mlp: Mlp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Classifier {
    pub weight: ParamId,
    pub bias: ParamId,
}

/// Per-clip network input: patches and, for cue-driven schemes, the cue bank.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput<T> {
    /// `[T' × S × patch_dim]`.
    pub patches: Tensor<T>,
    pub cues: Option<CueBank<T>>,
}

impl<T: Scalar> ModelInput<T> {
    pub fn cast<U: Scalar>(&self) -> ModelInput<U> {
        ModelInput {
            patches: self.patches.cast(),
            cues: self.cues.as_ref().map(CueBank::cast),
        }
    }
}

#[derive(Clone, Copy, Default)]
pub struct ForwardOptions<'a> {
    pub counter: Option<&'a OpCounter>,
    pub trace: bool,
}

pub struct ForwardOutput<'t, T: Scalar> {
    /// `[classes]`.
    pub logits: Var<'t, T>,
    pub trace: AttentionTrace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dvt {
    pub cfg: ModelConfig,
    pub geom: GridGeom,
    pub embedding: Embedding,
    pub blocks: Vec<Block>,
    pub head: Classifier,
}

/// Validates `cfg` and registers every parameter in `store`, initialised
/// from `cfg.seed`.
pub fn build_model<T: Scalar>(cfg: &ModelConfig, store: &mut ParamStore<T>) -> Result<Dvt> {
    cfg.validate()?;
    let geom = cfg.geom()?;
    let rng = Rng::new(cfg.seed).split_named("init");
    let (d, spec) = (cfg.dim, cfg.patch_spec());
    let embedding = Embedding::init(store, &rng, spec, geom, d);
    let blocks = (0..cfg.layers)
        .map(|l| {
            let p = format!("layer{l}");
            Block {
                ln1: LayerNormParams::init(store, &format!("{p}.ln1"), d),
                attn: AttentionLayer::init(store, &rng, &format!("{p}.attn"), d, cfg.attn, cfg.cue, cfg.patch),
                ln2: LayerNormParams::init(store, &format!("{p}.ln2"), d),
                mlp: Mlp::init(store, &rng, &format!("{p}.mlp"), d, cfg.mlp_ratio),
            }
        })
        .collect();
    let head = Classifier {
        weight: uniform(
            store,
            &rng,
            "head.weight".into(),
            &[d, cfg.classes],
            1.0 / (d as f64).sqrt(),
        ),
        bias: zeros(store, "head.bias".into(), &[cfg.classes]),
    };
    Ok(Dvt {
        cfg: cfg.clone(),
        geom,
        embedding,
        blocks,
        head,
    })
}

impl Dvt {
    pub fn needs_cues(&self) -> bool {
        self.cfg.layers > 0 && self.cfg.attn.scheme.uses_cues()
    }

    pub fn subclips(&self) -> Result<SubClips> {
        SubClips::new(self.geom.frames, self.cfg.attn.subclips)
    }

    /// Patches plus, when the scheme reads them, cues from a fresh encode.
    pub fn prepare<T: Scalar>(&self, clip: &ClipTensor) -> Result<ModelInput<T>> {
        if !self.needs_cues() {
            return self.prepare_with_gop(clip, None);
        }
        let gop = block_match_encode(clip, &self.cfg.codec)?;
        self.prepare_with_gop(clip, Some(&gop))
    }

    pub fn prepare_with_gop<T: Scalar>(&self, clip: &ClipTensor, gop: Option<&GopClip>) -> Result<ModelInput<T>> {
        let dims = clip.dims();
        if dims != (self.cfg.frames, self.cfg.height, self.cfg.width) {
            return Err(DvtError::config(format!(
                "clip is {}x{}x{}, model expects {}x{}x{}",
                dims.0, dims.1, dims.2, self.cfg.frames, self.cfg.height, self.cfg.width
            )));
        }
        let patches = patchify(clip, self.cfg.patch_spec())?;
        let cues = match (self.needs_cues(), gop) {
            (false, _) => None,
            (true, None) => return Err(DvtError::config("scheme needs a compressed stream for motion cues")),
            (true, Some(gop)) => Some(build_cue_bank(
                clip,
                gop,
                self.cfg.cue,
                &self.subclips()?,
                self.cfg.tubelet,
                self.cfg.patch,
                self.cfg.accumulation,
            )?),
        };
        Ok(ModelInput { patches, cues })
    }

    pub fn forward<'t, T: Scalar>(
        &self,
        input: &ModelInput<T>,
        bound: &Bound<'t, T>,
        opts: ForwardOptions<'_>,
    ) -> Result<ForwardOutput<'t, T>> {
        let tape = bound
            .vars()
            .first()
            .ok_or_else(|| DvtError::config("empty parameter set"))?
            .tape();
        let e = &self.embedding;
        let patches = tape.constant(input.patches.clone());
        let mut z = embed(
            patches,
            bound[e.weight],
            bound[e.pos.spatial],
            bound[e.pos.temporal],
            self.geom,
        )?;
        let mut trace = AttentionTrace::default();
        let (n, d) = (self.geom.tokens(), self.cfg.dim);
        for (l, b) in self.blocks.iter().enumerate() {
            let normed = TokenGrid::new(b.ln1.apply(z.tokens, bound)?, self.geom)?;
            let ctx = LayerContext {
                cues: input.cues.as_ref(),
                counter: opts.counter,
                trace_layer: opts.trace.then_some(l),
            };
            let (mid, layer_trace) = b.attn.forward(&normed, &z, bound, ctx)?;
            if let Some(t) = layer_trace {
                trace.extend(t);
            }
            let rows = mid.tokens.reshape(&[n, d])?;
            let update = b.mlp.apply(b.ln2.apply(rows, bound)?, bound)?;
            z = mid.with_tokens(rows.add(update)?)?;
        }
        let pooled = z.tokens.reshape(&[n, d])?.mean_rows().reshape(&[1, d])?;
        let logits = pooled
            .linear(bound[self.head.weight], Some(bound[self.head.bias]))?
            .reshape(&[self.cfg.classes])?;
        Ok(ForwardOutput { logits, trace })
    }

    /// Number of scalars the configuration implies, computed without building
    /// anything.
    pub fn closed_form_param_count(cfg: &ModelConfig) -> Result<usize> {
        let geom = cfg.geom()?;
        let d = cfg.dim;
        let a = &cfg.attn;
        let embed = cfg.patch_spec().patch_dim() * d + geom.sites() * d + geom.frames * d;
        let out_proj = d * d + d;
        let dsta = 2 * d * d + 3 * a.heads * a.samples * d + cfg.cue.patch_dim(cfg.patch) * d + out_proj;
        let dmsa = a.scales * (27 * d * d + 2 * d * d + 3 * a.heads * a.ms_samples * d) + out_proj;
        let fusion = match a.fusion {
            crate::attention::FusionMode::Linear => 2 * d * d + d,
            crate::attention::FusionMode::Mixer => {
                let h = 2 * d * a.rho;
                2 * d * h + h + h * d + d
            }
        };
        let attn = match a.scheme {
            Scheme::Global | Scheme::Space | Scheme::Time => 3 * d * d + out_proj,
            Scheme::Dsta => dsta,
            Scheme::Dmsa => dmsa,
            Scheme::DstMs => dsta + dmsa + fusion,
        };
        let h = d * cfg.mlp_ratio;
        let block = 4 * d + attn + (d * h + h + h * d + d);
        Ok(embed + cfg.layers * block + d * cfg.classes + cfg.classes)
    }
}
