//! Fused deformable gather: per query and head, softmax over a set of
//! sampling slots, bilinear reads of value grids at `base + offset`, and the
//! weighted sum. One hand-written adjoint covers values, offsets and logits.

use std::rc::Rc;

use crate::error::{DvtError, Result};
use crate::numerics::{bilinear_tap, softmax_in_place, BilinearTap, Scalar, Tensor, Var};

use super::OpCounter;

/// Where one sampling slot reads from before its offset is applied.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotSource {
    /// Index into the grid list.
    pub grid: usize,
    /// Frame within that grid.
    pub frame: usize,
    /// Base location in node-index space.
    pub y: f64,
    pub x: f64,
}

/// Static layout of a deformable gather.
#[derive(Clone, Debug)]
pub struct SamplePlan {
    pub queries: usize,
    pub heads: usize,
    pub slots: usize,
    /// `queries · slots` entries.
    pub sources: Vec<SlotSource>,
    /// `queries · heads · slots` element indices of `dy` in the offsets var
    /// (`dx` follows it).
    pub offset_index: Vec<usize>,
    /// `queries · heads · slots` element indices in the logits var.
    pub logit_index: Vec<usize>,
}

impl SamplePlan {
    fn qhs(&self, q: usize, h: usize, j: usize) -> usize {
        (q * self.heads + h) * self.slots + j
    }
}

/// Result of the gather for one (query, head, slot): clamped location and
/// normalized weight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRecord {
    pub grid: usize,
    pub frame: usize,
    pub y: f64,
    pub x: f64,
    pub weight: f64,
}

/// Output of [`deform_aggregate`]: `[queries × D]` plus one record per
/// (query, head, slot) in plan order.
pub struct Gathered<'t, T: Scalar> {
    pub out: Var<'t, T>,
    pub records: Vec<SampleRecord>,
}

struct GridInfo {
    frames: usize,
    h: usize,
    w: usize,
}

/// `out[q, head h] = Σ_j softmax_j(logits) · bilinear(grid_j, base_j + offset_j)`
/// restricted to the head's channel group. Every grid is `[frames × H × W × D]`.
pub fn deform_aggregate<'t, T: Scalar>(
    grids: &[Var<'t, T>],
    plan: Rc<SamplePlan>,
    offsets: Var<'t, T>,
    logits: Var<'t, T>,
    counter: Option<&OpCounter>,
) -> Result<Gathered<'t, T>> {
    let first = grids
        .first()
        .ok_or_else(|| DvtError::config("deformable gather needs a value grid"))?;
    let values: Vec<Rc<Tensor<T>>> = grids.iter().map(|g| g.value()).collect();
    let d = values[0].last_dim();
    let mut info = Vec::with_capacity(values.len());
    for v in &values {
        let s = v.shape();
        if s.len() != 4 || s[3] != d {
            return Err(DvtError::shape("deform_aggregate", values[0].shape(), s));
        }
        info.push(GridInfo {
            frames: s[0],
            h: s[1],
            w: s[2],
        });
    }
    let (nq, nh, ns) = (plan.queries, plan.heads, plan.slots);
    if nh == 0 || !d.is_multiple_of(nh) {
        return Err(DvtError::config(format!("dimension {d} not divisible by {nh} heads")));
    }
    let hd = d / nh;
    let off = offsets.value();
    let lg = logits.value();
    if plan.sources.len() != nq * ns
        || plan.offset_index.len() != nq * nh * ns
        || plan.logit_index.len() != nq * nh * ns
    {
        return Err(DvtError::config("inconsistent sample plan"));
    }
    if plan.offset_index.iter().any(|&i| i + 1 >= off.len()) || plan.logit_index.iter().any(|&i| i >= lg.len()) {
        return Err(DvtError::shape("deform_aggregate", off.shape(), lg.shape()));
    }
    for src in &plan.sources {
        if src.grid >= info.len() || src.frame >= info[src.grid].frames {
            return Err(DvtError::config("sample plan references a missing grid frame"));
        }
    }

    let mut taps: Vec<BilinearTap<T>> = Vec::with_capacity(nq * nh * ns);
    let mut alphas: Vec<T> = vec![T::zero(); nq * nh * ns];
    let mut out = vec![T::zero(); nq * d];
    let mut records = Vec::with_capacity(nq * nh * ns);
    let mut row = vec![T::zero(); ns];
    for q in 0..nq {
        for h in 0..nh {
            for (j, r) in row.iter_mut().enumerate() {
                *r = lg.data()[plan.logit_index[plan.qhs(q, h, j)]];
            }
            softmax_in_place(&mut row);
            let dst = &mut out[q * d + h * hd..q * d + (h + 1) * hd];
            for j in 0..ns {
                let k = plan.qhs(q, h, j);
                let src = plan.sources[q * ns + j];
                let g = &info[src.grid];
                let oi = plan.offset_index[k];
                let y = T::lit(src.y) + off.data()[oi];
                let x = T::lit(src.x) + off.data()[oi + 1];
                let tap = bilinear_tap(g.h, g.w, y, x);
                let frame_base = src.frame * g.h * g.w;
                let grid = values[src.grid].data();
                let a = row[j];
                for (n, &wt) in tap.nodes.iter().zip(&tap.weights) {
                    let base = (frame_base + n) * d + h * hd;
                    let coef = a * wt;
                    for (o, &v) in dst.iter_mut().zip(&grid[base..base + hd]) {
                        *o = *o + coef * v;
                    }
                }
                alphas[k] = a;
                records.push(SampleRecord {
                    grid: src.grid,
                    frame: src.frame,
                    y: tap.y.as_f64(),
                    x: tap.x.as_f64(),
                    weight: a.as_f64(),
                });
                taps.push(tap);
            }
        }
    }
    if let Some(c) = counter {
        c.add((nq * ns) as u64);
    }

    let out = Tensor::from_parts(vec![nq, d], out);
    let mut parents: Vec<Var<'t, T>> = grids.to_vec();
    parents.push(offsets);
    parents.push(logits);
    let grid_ids: Vec<usize> = grids.iter().map(|g| g.id()).collect();
    let (off_id, logit_id) = (offsets.id(), logits.id());
    let taps = Rc::new(taps);
    let plan_b = Rc::clone(&plan);
    let var = first.tape().record(out, &parents, move |gout, grads| {
        let go = gout.data();
        let plan = &plan_b;
        let mut d_off = vec![T::zero(); off.len()];
        let mut d_logit = vec![T::zero(); lg.len()];
        let mut d_grid: Vec<Option<Vec<T>>> = grid_ids
            .iter()
            .zip(&values)
            .map(|(&id, v)| grads.wants(id).then(|| vec![T::zero(); v.len()]))
            .collect();
        let mut dots = vec![T::zero(); ns];
        for q in 0..nq {
            for h in 0..nh {
                let g_head = &go[q * d + h * hd..q * d + (h + 1) * hd];
                let mut mean = T::zero();
                for j in 0..ns {
                    let k = plan.qhs(q, h, j);
                    let src = plan.sources[q * ns + j];
                    let gi = &info[src.grid];
                    let tap = &taps[k];
                    let grid = values[src.grid].data();
                    let frame_base = src.frame * gi.h * gi.w;
                    let a = alphas[k];
                    let (mut sval, mut sy, mut sx) = (T::zero(), T::zero(), T::zero());
                    for c in 0..4 {
                        let base = (frame_base + tap.nodes[c]) * d + h * hd;
                        let node = &grid[base..base + hd];
                        let dot: T = node.iter().zip(g_head).map(|(&v, &g)| v * g).sum();
                        sval = sval + tap.weights[c] * dot;
                        sy = sy + tap.d_dy[c] * dot;
                        sx = sx + tap.d_dx[c] * dot;
                        if let Some(dg) = d_grid[src.grid].as_mut() {
                            let coef = a * tap.weights[c];
                            for (o, &g) in dg[base..base + hd].iter_mut().zip(g_head) {
                                *o = *o + coef * g;
                            }
                        }
                    }
                    let oi = plan.offset_index[k];
                    d_off[oi] = d_off[oi] + a * sy;
                    d_off[oi + 1] = d_off[oi + 1] + a * sx;
                    dots[j] = sval;
                    mean = mean + a * sval;
                }
                for (j, &dot) in dots.iter().enumerate() {
                    let k = plan.qhs(q, h, j);
                    let li = plan.logit_index[k];
                    d_logit[li] = d_logit[li] + alphas[k] * (dot - mean);
                }
            }
        }
        for (id, dg) in grid_ids.iter().zip(d_grid) {
            if let Some(dg) = dg {
                grads.acc(*id, |g| g.iter_mut().zip(&dg).for_each(|(a, &b)| *a = *a + b));
            }
        }
        grads.acc(off_id, |g| g.iter_mut().zip(&d_off).for_each(|(a, &b)| *a = *a + b));
        grads.acc(logit_id, |g| g.iter_mut().zip(&d_logit).for_each(|(a, &b)| *a = *a + b));
    });
    Ok(Gathered { out: var, records })
}
