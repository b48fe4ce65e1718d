//! Deformable video-transformer attention driven by compressed-video
//! motion cues, with dense baselines, a synthetic block-matching codec, a
//! trainable toy classifier and analysis tooling.

pub mod analysis;
pub mod attention;
pub mod error;
pub mod model;
pub mod motioncue;
pub mod numerics;
pub mod tokenization;

pub use error::{DvtError, Result};
pub use numerics::{Rng, Scalar, Tape, Tensor, Var};
