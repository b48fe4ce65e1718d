//! Closed-form cost models and their check against instrumented runs.

use crate::attention::{AttentionLayer, AttnConfig, LayerContext, OpCounter, Scheme};
use crate::error::{DvtError, Result};
use crate::motioncue::{CueBank, CueKind, SubClips};
use crate::numerics::{ParamStore, Rng, Tape};
use crate::tokenization::{GridGeom, TokenGrid};

/// (query, attended location) pairs of one head:
///
/// | scheme | count |
/// |---|---|
/// | global | S²T² |
/// | space | S²T |
/// | time | ST² |
/// | dsta | S·T·(T/B)·N |
/// | dmsa | S·T·F·N_ms |
/// | dst_ms | dsta + dmsa |
pub fn count_comparisons(scheme: Scheme, s: u64, t: u64, cfg: &AttnConfig) -> Result<u64> {
    let (n, b) = (cfg.samples as u64, cfg.subclips as u64);
    let dsta = || -> Result<u64> {
        if b == 0 || !t.is_multiple_of(b) {
            return Err(DvtError::config(format!(
                "{t} frames cannot be split into {b} sub-clips"
            )));
        }
        Ok(s * t * (t / b) * n)
    };
    let dmsa = s * t * cfg.scales as u64 * cfg.ms_samples as u64;
    Ok(match scheme {
        Scheme::Global => s * s * t * t,
        Scheme::Space => s * s * t,
        Scheme::Time => s * t * t,
        Scheme::Dsta => dsta()?,
        Scheme::Dmsa => dmsa,
        Scheme::DstMs => dsta()? + dmsa,
    })
}

/// Global-to-deformable comparison ratio as a reduced fraction.
pub fn global_dsta_ratio(s: u64, t: u64, cfg: &AttnConfig) -> Result<(u64, u64)> {
    let g = count_comparisons(Scheme::Global, s, t, cfg)?;
    let d = count_comparisons(Scheme::Dsta, s, t, cfg)?;
    let k = gcd(g, d);
    Ok((g / k, d / k))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Multiply-accumulate totals of one attention sub-layer, projections
/// included.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CostModel {
    pub scheme: Scheme,
    pub comparisons: u64,
    pub macs: u64,
}

/// Forward multiply-accumulates of one attention sub-layer on `geom` with
/// width `dim` (excluding layer norms and elementwise work).
pub fn attention_cost(
    scheme: Scheme,
    geom: &GridGeom,
    dim: usize,
    cfg: &AttnConfig,
    cue: CueKind,
    patch: usize,
) -> Result<CostModel> {
    let (s, t, d) = (geom.sites() as u64, geom.frames as u64, dim as u64);
    let n_tok = s * t;
    let heads = cfg.heads as u64;
    let hd = d / heads.max(1);
    let out_proj = n_tok * d * d;
    let comparisons = count_comparisons(scheme, s, t, cfg)?;
    let dense = |pairs: u64| 3 * n_tok * d * d + 2 * pairs * heads * hd + out_proj;
    let dsta = || -> Result<u64> {
        let pairs_rows = n_tok * (t / cfg.subclips as u64);
        let cue_dim = cue.patch_dim(patch) as u64;
        let hn = heads * cfg.samples as u64;
        let proj = 2 * n_tok * d * d + pairs_rows * cue_dim * d + pairs_rows * d * 3 * hn;
        let sample = count_comparisons(Scheme::Dsta, s, t, cfg)? * heads * 4 * hd;
        Ok(proj + sample + out_proj)
    };
    let dmsa = || {
        let mut total = 0;
        let hn = heads * cfg.ms_samples as u64;
        for f in 0..cfg.scales {
            let r = cfg.stride(f);
            let sites_f = (geom.grid_h.div_ceil(r) * geom.grid_w.div_ceil(r)) as u64;
            let conv = t * sites_f * 27 * d * d;
            let query = if r == 1 { 0 } else { n_tok * 4 * d };
            total += conv + query + n_tok * d * d + t * sites_f * d * d + n_tok * d * 3 * hn;
        }
        total + count_comparisons(Scheme::Dmsa, s, t, cfg).unwrap_or(0) * heads * 4 * hd + out_proj
    };
    let fusion = match cfg.fusion {
        crate::attention::FusionMode::Linear => n_tok * 2 * d * d,
        crate::attention::FusionMode::Mixer => {
            let h = 2 * d * cfg.rho as u64;
            n_tok * (2 * d * h + h * d)
        }
    };
    let macs = match scheme {
        Scheme::Global | Scheme::Space | Scheme::Time => dense(comparisons),
        Scheme::Dsta => dsta()?,
        Scheme::Dmsa => dmsa(),
        Scheme::DstMs => dsta()? + dmsa() + fusion,
    };
    Ok(CostModel {
        scheme,
        comparisons,
        macs,
    })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountReport {
    pub scheme: Scheme,
    pub geom: GridGeom,
    pub expected: u64,
    pub observed: u64,
}

impl CountReport {
    pub fn passed(&self) -> bool {
        self.expected == self.observed
    }
}

/// Runs one instrumented attention layer with random weights and compares
/// its counter with [`count_comparisons`].
pub fn verify_counts(cfg: &AttnConfig, geom: GridGeom, dim: usize, seed: u64) -> Result<CountReport> {
    cfg.validate(&geom, dim)?;
    let rng = Rng::new(seed);
    let patch = 2;
    let mut store = ParamStore::<f64>::new();
    let layer = AttentionLayer::init(&mut store, &rng, "v", dim, *cfg, CueKind::Md, patch);
    let bank = if cfg.scheme.uses_cues() {
        let sc = SubClips::new(geom.frames, cfg.subclips)?;
        let mut b = CueBank::zeros(CueKind::Md, sc, geom.sites(), patch);
        let shape = b.data.shape().to_vec();
        b.data = rng.split_named("cues").uniform_tensor(&shape, -1.0, 1.0);
        Some(b)
    } else {
        None
    };
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let x = rng
        .split_named("tokens")
        .normal_tensor(&[geom.frames, geom.sites(), dim], 1.0);
    let z = TokenGrid::new(tape.constant(x), geom)?;
    let counter = OpCounter::new();
    let ctx = LayerContext {
        cues: bank.as_ref(),
        counter: Some(&counter),
        trace_layer: None,
    };
    layer.forward(&z, &z, &bound, ctx)?;
    Ok(CountReport {
        scheme: cfg.scheme,
        geom,
        expected: count_comparisons(cfg.scheme, geom.sites() as u64, geom.frames as u64, cfg)?,
        observed: counter.comparisons(),
    })
}

/// `count` random small valid configurations of `scheme`: a grid of up to
/// 4×4 sites, T ≤ 4, N ≤ 4, heads ≤ 2, F ≤ 2.
pub fn random_small_configs(scheme: Scheme, count: usize, seed: u64) -> Vec<(AttnConfig, GridGeom, usize)> {
    let mut rng = Rng::new(seed).split_named(scheme.as_str());
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let frames = 1 + rng.below(4);
        let divisors: Vec<usize> = (1..=frames).filter(|b| frames.is_multiple_of(*b)).collect();
        let heads = 1 + rng.below(2);
        let cfg = AttnConfig {
            samples: 1 + rng.below(4),
            subclips: divisors[rng.below(divisors.len())],
            ms_samples: 1 + rng.below(4),
            scales: 1 + rng.below(2),
            heads,
            scheme,
            ..AttnConfig::default()
        };
        let geom = GridGeom {
            frames,
            grid_h: 1 + rng.below(4),
            grid_w: 1 + rng.below(4),
        };
        let dim = heads * (1 + rng.below(3));
        if cfg.validate(&geom, dim).is_ok() {
            out.push((cfg, geom, dim));
        }
    }
    out
}
