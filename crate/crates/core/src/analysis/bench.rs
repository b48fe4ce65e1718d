//! Wall-clock microbenchmarks of one attention sub-layer.

use std::time::Instant;

use crate::attention::{AttentionLayer, AttnConfig, LayerContext, Scheme};
use crate::error::{DvtError, Result};
use crate::motioncue::{CueBank, CueKind, SubClips};
use crate::numerics::{ParamStore, Rng, Tape};
use crate::tokenization::{GridGeom, TokenGrid};

use super::counts::attention_cost;

pub const MIN_REPS: usize = 20;

/// Wall-time statistics in seconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchStats {
    pub reps: usize,
    pub median: f64,
    pub p95: f64,
    pub mean: f64,
}

impl BenchStats {
    pub fn from_samples(mut s: Vec<f64>) -> Self {
        s.sort_by(f64::total_cmp);
        let n = s.len();
        let median = if n % 2 == 1 {
            s[n / 2]
        } else {
            0.5 * (s[n / 2 - 1] + s[n / 2])
        };
        let p95 = s[((0.95 * n as f64).ceil() as usize).clamp(1, n) - 1];
        BenchStats {
            reps: n,
            median,
            p95,
            mean: s.iter().sum::<f64>() / n as f64,
        }
    }
}

/// Times `f` `reps` times after `warmup` untimed calls.
pub fn time_reps(warmup: usize, reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<BenchStats> {
    if reps < MIN_REPS {
        return Err(DvtError::config(format!(
            "at least {MIN_REPS} timed repetitions are required, got {reps}"
        )));
    }
    for _ in 0..warmup {
        f()?;
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t0 = Instant::now();
        f()?;
        samples.push(t0.elapsed().as_secs_f64());
    }
    Ok(BenchStats::from_samples(samples))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub scheme: Scheme,
    pub config: AttnConfig,
    pub geom: GridGeom,
    pub dim: usize,
    pub stats: BenchStats,
    pub macs: u64,
}

impl BenchReport {
    /// Counted multiply-accumulates per second of median wall time.
    pub fn macs_per_sec(&self) -> f64 {
        self.macs as f64 / self.stats.median
    }

    pub fn to_block(&self) -> String {
        format!(
            "scheme = {}\nframes = {}\nsites = {}\ndim = {}\nreps = {}\nmedian_s = {:.6e}\np95_s = {:.6e}\nmacs = {}\nmacs_per_s = {:.4e}\n",
            self.scheme.as_str(),
            self.geom.frames,
            self.geom.sites(),
            self.dim,
            self.stats.reps,
            self.stats.median,
            self.stats.p95,
            self.macs,
            self.macs_per_sec()
        )
    }
}

/// Forward pass of a randomly initialised f32 attention layer on the calling
/// thread.
pub fn bench_attention(
    cfg: &AttnConfig,
    geom: GridGeom,
    dim: usize,
    warmup: usize,
    reps: usize,
    seed: u64,
) -> Result<BenchReport> {
    cfg.validate(&geom, dim)?;
    let patch = 4;
    let rng = Rng::new(seed);
    let mut store = ParamStore::<f32>::new();
    let layer = AttentionLayer::init(&mut store, &rng, "bench", dim, *cfg, CueKind::Md, patch);
    let bank = if cfg.scheme.uses_cues() {
        let sc = SubClips::new(geom.frames, cfg.subclips)?;
        let mut b = CueBank::<f32>::zeros(CueKind::Md, sc, geom.sites(), patch);
        let shape = b.data.shape().to_vec();
        b.data = rng.split_named("cues").uniform_tensor(&shape, -2.0, 2.0);
        Some(b)
    } else {
        None
    };
    let x = rng
        .split_named("tokens")
        .normal_tensor::<f32>(&[geom.frames, geom.sites(), dim], 1.0);
    let stats = time_reps(warmup, reps, || {
        let tape = Tape::new();
        let bound = store.bind(&tape);
        let z = TokenGrid::new(tape.constant(x.clone()), geom)?;
        let ctx = LayerContext {
            cues: bank.as_ref(),
            ..LayerContext::default()
        };
        let out = layer.forward(&z, &z, &bound, ctx)?;
        std::hint::black_box(out.0.tokens.value());
        Ok(())
    })?;
    let cost = attention_cost(cfg.scheme, &geom, dim, cfg, CueKind::Md, patch)?;
    Ok(BenchReport {
        scheme: cfg.scheme,
        config: *cfg,
        geom,
        dim,
        stats,
        macs: cost.macs,
    })
}
