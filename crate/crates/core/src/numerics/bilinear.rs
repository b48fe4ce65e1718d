//! Bilinear sampling of an `H×W×D` grid at real-valued `(y, x)` coordinates.
//!
//! Coordinates are in node-index space: node `(i, j)` sits at `(i, j)`.
//! Out-of-range coordinates are clamped to `[0, H−1]×[0, W−1]`, so the
//! sampled value has zero derivative w.r.t. a clamped coordinate. Inside the
//! grid the cell is chosen right-continuously (`floor`), except on the last
//! row/column which belongs to the preceding cell.

use std::rc::Rc;

use crate::error::{DvtError, Result};

use super::{Scalar, Tensor, Var};

/// The four taps of one bilinear sample and their coordinate derivatives.
#[derive(Clone, Copy, Debug)]
pub struct BilinearTap<T> {
    /// Flattened `y·W + x` node indices, ordered (y0,x0), (y0,x1), (y1,x0), (y1,x1).
    pub nodes: [usize; 4],
    pub weights: [T; 4],
    pub d_dy: [T; 4],
    pub d_dx: [T; 4],
    /// Coordinates after clamping.
    pub y: T,
    pub x: T,
}

fn axis<T: Scalar>(v: T, n: usize) -> (usize, usize, T, T, T) {
    // returns (i0, i1, frac, clamped value, d frac / d v)
    let hi = T::from_usize(n - 1).unwrap();
    let inside = v >= T::zero() && v <= hi;
    let c = v.max(T::zero()).min(hi);
    if n == 1 {
        return (0, 0, T::zero(), c, T::zero());
    }
    let mut i0 = c.floor().to_usize().unwrap_or(0);
    if i0 >= n - 1 {
        i0 = n - 2;
    }
    let frac = c - T::from_usize(i0).unwrap();
    let slope = if inside { T::one() } else { T::zero() };
    (i0, i0 + 1, frac, c, slope)
}

pub fn bilinear_tap<T: Scalar>(h: usize, w: usize, y: T, x: T) -> BilinearTap<T> {
    let (y0, y1, fy, yc, sy) = axis(y, h);
    let (x0, x1, fx, xc, sx) = axis(x, w);
    let one = T::one();
    BilinearTap {
        nodes: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
        weights: [(one - fy) * (one - fx), (one - fy) * fx, fy * (one - fx), fy * fx],
        d_dy: [-(one - fx) * sy, -fx * sy, (one - fx) * sy, fx * sy],
        d_dx: [-(one - fy) * sx, (one - fy) * sx, -fy * sx, fy * sx],
        y: yc,
        x: xc,
    }
}

/// Samples `grid[H×W×D]` at `pts[n×2]` (rows of `(y, x)`), giving `[n×D]`.
/// Differentiable w.r.t. both the grid and the coordinates.
pub fn bilinear_sample<'t, T: Scalar>(grid: Var<'t, T>, pts: Var<'t, T>) -> Result<Var<'t, T>> {
    let g = grid.value();
    let p = pts.value();
    let gs = g.shape();
    if gs.len() != 3 || p.ndim() != 2 || p.shape()[1] != 2 {
        return Err(DvtError::shape("bilinear_sample", gs, p.shape()));
    }
    let (h, w, d) = (gs[0], gs[1], gs[2]);
    let n = p.shape()[0];
    let taps: Rc<Vec<BilinearTap<T>>> =
        Rc::new(p.data().chunks(2).map(|yx| bilinear_tap(h, w, yx[0], yx[1])).collect());
    let mut out = vec![T::zero(); n * d];
    for (i, tap) in taps.iter().enumerate() {
        let dst = &mut out[i * d..(i + 1) * d];
        for k in 0..4 {
            let src = &g.data()[tap.nodes[k] * d..(tap.nodes[k] + 1) * d];
            let wk = tap.weights[k];
            dst.iter_mut().zip(src).for_each(|(o, &v)| *o = *o + wk * v);
        }
    }
    let out = Tensor::from_parts(vec![n, d], out);
    let (ig, ip) = (grid.id(), pts.id());
    Ok(grid.tape().record(out, &[grid, pts], move |gout, grads| {
        let go = gout.data();
        grads.acc(ig, |gg| {
            for (i, tap) in taps.iter().enumerate() {
                let src = &go[i * d..(i + 1) * d];
                for k in 0..4 {
                    let dst = &mut gg[tap.nodes[k] * d..(tap.nodes[k] + 1) * d];
                    let wk = tap.weights[k];
                    dst.iter_mut().zip(src).for_each(|(o, &v)| *o = *o + wk * v);
                }
            }
        });
        grads.acc(ip, |gp| {
            for (i, tap) in taps.iter().enumerate() {
                let src = &go[i * d..(i + 1) * d];
                let (mut dy, mut dx) = (T::zero(), T::zero());
                for k in 0..4 {
                    let node = &g.data()[tap.nodes[k] * d..(tap.nodes[k] + 1) * d];
                    let dot: T = node.iter().zip(src).map(|(&a, &b)| a * b).sum();
                    dy = dy + tap.d_dy[k] * dot;
                    dx = dx + tap.d_dx[k] * dot;
                }
                gp[2 * i] = gp[2 * i] + dy;
                gp[2 * i + 1] = gp[2 * i + 1] + dx;
            }
        });
    }))
}
