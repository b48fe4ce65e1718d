//! Dense tensors, reverse-mode differentiation with hand-written adjoints,
//! finite-difference checking, Adam, and a splittable deterministic RNG.

mod adam;
mod bilinear;
mod conv;
mod gradcheck;
pub mod io;
mod ops;
mod params;
mod rng;
mod scalar;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bilinear::{bilinear_sample, bilinear_tap, BilinearTap};
pub use conv::{conv3d, conv_out_len};
pub use gradcheck::{grad_check, rel_err, GradCheckOptions, GradFailure, GradReport, REL_ERR_FLOOR};
pub use ops::{concat_cols, concat_rows, softmax_in_place};
pub use params::{Bound, ParamId, ParamStore};
pub use rng::Rng;
pub use scalar::Scalar;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
