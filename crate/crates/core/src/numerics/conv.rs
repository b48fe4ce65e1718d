use crate::error::{DvtError, Result};

use super::tensor::{gemm, gemm_acc};
use super::{Scalar, Tensor, Var};

/// Output extent of a 3-tap, pad-1 convolution with the given stride.
pub fn conv_out_len(n: usize, stride: usize) -> usize {
    n.div_ceil(stride)
}

struct Geometry {
    input: [usize; 4],
    output: [usize; 3],
    strides: [usize; 3],
}

impl Geometry {
    /// Gathers `[out_voxels × 27·C]` patches, zero outside the input.
    fn im2col<T: Scalar>(&self, x: &[T]) -> Vec<T> {
        let [t, h, w, c] = self.input;
        let [to, ho, wo] = self.output;
        let [st, sh, sw] = self.strides;
        let cols = 27 * c;
        let mut col = vec![T::zero(); to * ho * wo * cols];
        for ot in 0..to {
            for oh in 0..ho {
                for ow in 0..wo {
                    let row = ((ot * ho + oh) * wo + ow) * cols;
                    for kt in 0..3 {
                        let it = (ot * st + kt) as isize - 1;
                        if it < 0 || it >= t as isize {
                            continue;
                        }
                        for kh in 0..3 {
                            let ih = (oh * sh + kh) as isize - 1;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            for kw in 0..3 {
                                let iw = (ow * sw + kw) as isize - 1;
                                if iw < 0 || iw >= w as isize {
                                    continue;
                                }
                                let src = ((it as usize * h + ih as usize) * w + iw as usize) * c;
                                let dst = row + ((kt * 3 + kh) * 3 + kw) * c;
                                col[dst..dst + c].copy_from_slice(&x[src..src + c]);
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im_acc<T: Scalar>(&self, col: &[T], gx: &mut [T]) {
        let [t, h, w, c] = self.input;
        let [to, ho, wo] = self.output;
        let [st, sh, sw] = self.strides;
        let cols = 27 * c;
        for ot in 0..to {
            for oh in 0..ho {
                for ow in 0..wo {
                    let row = ((ot * ho + oh) * wo + ow) * cols;
                    for kt in 0..3 {
                        let it = (ot * st + kt) as isize - 1;
                        if it < 0 || it >= t as isize {
                            continue;
                        }
                        for kh in 0..3 {
                            let ih = (oh * sh + kh) as isize - 1;
                            if ih < 0 || ih >= h as isize {
                                continue;
                            }
                            for kw in 0..3 {
                                let iw = (ow * sw + kw) as isize - 1;
                                if iw < 0 || iw >= w as isize {
                                    continue;
                                }
                                let dst = ((it as usize * h + ih as usize) * w + iw as usize) * c;
                                let src = row + ((kt * 3 + kh) * 3 + kw) * c;
                                for i in 0..c {
                                    gx[dst + i] = gx[dst + i] + col[src + i];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 3×3×3 convolution with zero padding 1: `x[T×H×W×C]`, `kernel[3×3×3×C×C']`.
pub fn conv3d<'t, T: Scalar>(x: Var<'t, T>, kernel: Var<'t, T>, strides: [usize; 3]) -> Result<Var<'t, T>> {
    let xv = x.value();
    let kv = kernel.value();
    let (xs, ks) = (xv.shape(), kv.shape());
    if xs.len() != 4 || ks.len() != 5 || ks[..3] != [3, 3, 3] || ks[3] != xs[3] {
        return Err(DvtError::shape("conv3d", xs, ks));
    }
    if strides.contains(&0) {
        return Err(DvtError::config("conv3d strides must be >= 1"));
    }
    let geo = Geometry {
        input: [xs[0], xs[1], xs[2], xs[3]],
        output: [
            conv_out_len(xs[0], strides[0]),
            conv_out_len(xs[1], strides[1]),
            conv_out_len(xs[2], strides[2]),
        ],
        strides,
    };
    let c_out = ks[4];
    let voxels: usize = geo.output.iter().product();
    let inner = 27 * xs[3];
    let col = geo.im2col(xv.data());
    let out = gemm(&col, kv.data(), voxels, inner, c_out, false, false);
    let [to, ho, wo] = geo.output;
    let out = Tensor::from_parts(vec![to, ho, wo, c_out], out);
    let (ix, ik) = (x.id(), kernel.id());
    Ok(x.tape().record(out, &[x, kernel], move |g, grads| {
        grads.acc(ik, |gk| gemm_acc(&col, g.data(), gk, inner, voxels, c_out, true, false));
        if grads.wants(ix) {
            let dcol = gemm(g.data(), kv.data(), voxels, c_out, inner, false, true);
            grads.acc(ix, |gx| geo.col2im_acc(&dcol, gx));
        }
    }))
}
