//! End-to-end gradient verification of a configured model.

use crate::error::Result;
use crate::numerics::{grad_check, Bound, GradCheckOptions, GradReport, ParamStore, Rng};
use crate::tokenization::ClipTensor;

use super::{build_model, generate_clip, ForwardOptions, ModelConfig, SyntheticDatasetSpec};

/// L=1, D=8, 2×2 sites over 4 frames, N=2: small enough to difference every
/// parameter.
pub fn tiny_config() -> ModelConfig {
    let mut c = ModelConfig {
        layers: 1,
        dim: 8,
        mlp_ratio: 2,
        frames: 4,
        height: 8,
        width: 8,
        patch: 4,
        ..ModelConfig::default()
    };
    c.attn.heads = 2;
    c.attn.samples = 2;
    c.attn.subclips = 2;
    c.attn.ms_samples = 2;
    c.attn.scales = 2;
    c.codec.radius = 2;
    c.codec.gop_len = 4;
    c
}

/// A labelled clip with the geometry of `cfg`, moving one pixel per frame.
pub fn probe_clip(cfg: &ModelConfig, index: usize) -> Result<(ClipTensor, usize)> {
    let spec = SyntheticDatasetSpec {
        num_clips: index + 1,
        frames: cfg.frames,
        height: cfg.height,
        width: cfg.width,
        square: (cfg.height.min(cfg.width) / 4).max(1),
        speed_min: 1,
        speed_max: 1,
        seed: cfg.seed,
        ..SyntheticDatasetSpec::default()
    };
    let (clip, traj) = generate_clip(&spec, index)?;
    Ok((clip, traj.direction.label() % cfg.classes))
}

/// Replaces the zero-initialised offset/logit weights, biases and LN shifts
/// with small random values so that every path carries gradient.
pub fn perturb_zero_init(store: &mut ParamStore<f64>, seed: u64) {
    let mut rng = Rng::new(seed).split_named("perturb");
    for id in store.ids().collect::<Vec<_>>() {
        let name = store.name(id);
        if name.contains("w_delta") || name.contains("w_alpha") || name.ends_with("bias") || name.ends_with("beta") {
            let shape = store.get(id).shape().to_vec();
            store.set(id, rng.uniform_tensor(&shape, -0.3, 0.3));
        }
    }
}

/// Finite-difference check of the cross-entropy of one probe clip with
/// respect to every parameter, in f64, away from the zero-offset start.
pub fn gradcheck_model(cfg: &ModelConfig, opts: &GradCheckOptions) -> Result<GradReport> {
    let mut store = ParamStore::<f64>::new();
    let model = build_model(cfg, &mut store)?;
    perturb_zero_init(&mut store, cfg.seed);
    let (clip, label) = probe_clip(cfg, 0)?;
    let input = model.prepare::<f64>(&clip)?;
    grad_check(
        |_, vars| {
            let bound = Bound::from_vars(vars.to_vec());
            model
                .forward(&input, &bound, ForwardOptions::default())?
                .logits
                .cross_entropy(label)
        },
        store.tensors(),
        opts,
    )
}
