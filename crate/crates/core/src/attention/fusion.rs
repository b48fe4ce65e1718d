use crate::error::{DvtError, Result};
use crate::numerics::{concat_cols, Bound, Scalar};
use crate::tokenization::TokenGrid;

use super::FusionParams;

/// Combines the two branch outputs channel-wise: `[z_st | z_ms] → D`.
pub fn fuse<'t, T: Scalar>(
    z_st: &TokenGrid<'t, T>,
    z_ms: &TokenGrid<'t, T>,
    params: &FusionParams,
    bound: &Bound<'t, T>,
) -> Result<TokenGrid<'t, T>> {
    if z_st.tokens.shape() != z_ms.tokens.shape() {
        return Err(DvtError::shape("fuse", &z_st.tokens.shape(), &z_ms.tokens.shape()));
    }
    let (n, d) = (z_st.geom.tokens(), z_st.dim());
    let cat = concat_cols(&[z_st.tokens.reshape(&[n, d])?, z_ms.tokens.reshape(&[n, d])?])?;
    let out = match *params {
        FusionParams::Linear { weight, bias } => cat.linear(bound[weight], Some(bound[bias]))?,
        FusionParams::Mixer { w1, b1, w2, b2 } => cat
            .linear(bound[w1], Some(bound[b1]))?
            .gelu()
            .linear(bound[w2], Some(bound[b2]))?,
    };
    z_st.with_tokens(out)
}
