//! Shared fixtures for the benchmarks.

use dvt_core::attention::{AttnConfig, Scheme};
use dvt_core::tokenization::{ClipTensor, GridGeom};
use dvt_core::{Rng, Tensor};

/// Square token grid of `side × side` sites over `frames` frames.
pub fn grid(frames: usize, side: usize) -> GridGeom {
    GridGeom {
        frames,
        grid_h: side,
        grid_w: side,
    }
}

/// Desk defaults (N=8, B=4, N_ms=8, F=2, 4 heads) for `scheme`.
pub fn desk_attention(scheme: Scheme) -> AttnConfig {
    AttnConfig {
        samples: 8,
        subclips: 4,
        ms_samples: 8,
        scales: 2,
        heads: 4,
        scheme,
        ..AttnConfig::default()
    }
}

/// Uniform-noise RGB clip.
pub fn noise_clip(frames: usize, h: usize, w: usize, seed: u64) -> ClipTensor {
    let mut rng = Rng::new(seed);
    let t: Tensor<f32> = rng.uniform_tensor(&[frames, h, w, 3], 0.0, 1.0);
    ClipTensor::new(t).expect("valid clip shape")
}
