//! Differentiable ops on [`Var`]. Every op has a hand-written adjoint.

use std::rc::Rc;

use crate::error::{DvtError, Result};

use super::tensor::{gemm, gemm_acc};
use super::{Scalar, Tensor, Var};

fn same_shape<T: Scalar>(op: &'static str, a: &Var<'_, T>, b: &Var<'_, T>) -> Result<()> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(DvtError::shape(op, &sa, &sb));
    }
    Ok(())
}

fn with_last(shape: &[usize], last: usize) -> Vec<usize> {
    let mut s = shape.to_vec();
    match s.last_mut() {
        Some(l) => *l = last,
        None => s.push(last),
    }
    s
}

impl<'t, T: Scalar> Var<'t, T> {
    /// `[.. × K]·[K × P] → [.. × P]`.
    pub fn matmul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = rhs.value();
        if b.ndim() != 2 || a.ndim() == 0 || a.last_dim() != b.shape()[0] {
            return Err(DvtError::shape("matmul", a.shape(), b.shape()));
        }
        let (m, k, n) = (a.rows(), b.shape()[0], b.shape()[1]);
        let out = Tensor::from_parts(with_last(a.shape(), n), gemm(a.data(), b.data(), m, k, n, false, false));
        let (ia, ib) = (self.id(), rhs.id());
        Ok(self.tape().record(out, &[self, rhs], move |g, grads| {
            if grads.wants(ia) {
                grads.acc(ia, |ga| gemm_acc(g.data(), b.data(), ga, m, n, k, false, true));
            }
            if grads.wants(ib) {
                grads.acc(ib, |gb| gemm_acc(a.data(), g.data(), gb, k, m, n, true, false));
            }
        }))
    }

    /// Batched product `[B × M × K]·[B × K × N]`, or `[B × M × K]·[B × N × K]ᵀ`
    /// when `transpose_rhs` is set.
    pub fn bmm(self, rhs: Var<'t, T>, transpose_rhs: bool) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = rhs.value();
        let (sa, sb) = (a.shape(), b.shape());
        let bad = || DvtError::shape("bmm", sa, sb);
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(bad());
        }
        let (batch, m, k) = (sa[0], sa[1], sa[2]);
        let n = if transpose_rhs { sb[1] } else { sb[2] };
        let kb = if transpose_rhs { sb[2] } else { sb[1] };
        if kb != k {
            return Err(bad());
        }
        let mut out = vec![T::zero(); batch * m * n];
        for bi in 0..batch {
            gemm_acc(
                &a.data()[bi * m * k..(bi + 1) * m * k],
                &b.data()[bi * k * n..(bi + 1) * k * n],
                &mut out[bi * m * n..(bi + 1) * m * n],
                m,
                k,
                n,
                false,
                transpose_rhs,
            );
        }
        let out = Tensor::from_parts(vec![batch, m, n], out);
        let (ia, ib) = (self.id(), rhs.id());
        Ok(self.tape().record(out, &[self, rhs], move |g, grads| {
            for bi in 0..batch {
                let gs = &g.data()[bi * m * n..(bi + 1) * m * n];
                let asl = &a.data()[bi * m * k..(bi + 1) * m * k];
                let bsl = &b.data()[bi * k * n..(bi + 1) * k * n];
                // dA = dC·op(B)ᵀ
                grads.acc(ia, |ga| {
                    gemm_acc(
                        gs,
                        bsl,
                        &mut ga[bi * m * k..(bi + 1) * m * k],
                        m,
                        n,
                        k,
                        false,
                        !transpose_rhs,
                    )
                });
                grads.acc(ib, |gb| {
                    let gb = &mut gb[bi * k * n..(bi + 1) * k * n];
                    if transpose_rhs {
                        // B is N×K: dB = dCᵀ·A
                        gemm_acc(gs, asl, gb, n, m, k, true, false)
                    } else {
                        gemm_acc(asl, gs, gb, k, m, n, true, false)
                    }
                });
            }
        }))
    }

    pub fn add(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("add", &self, &rhs)?;
        let a = self.value();
        let b = rhs.value();
        let out = Tensor::from_parts(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| x + y).collect(),
        );
        let (ia, ib) = (self.id(), rhs.id());
        Ok(self.tape().record(out, &[self, rhs], move |g, grads| {
            for id in [ia, ib] {
                grads.acc(id, |ga| ga.iter_mut().zip(g.data()).for_each(|(x, &y)| *x = *x + y));
            }
        }))
    }

    pub fn sub(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        let neg = rhs.scale(-T::one());
        self.add(neg)
    }

    /// Elementwise product.
    pub fn mul(self, rhs: Var<'t, T>) -> Result<Var<'t, T>> {
        same_shape("mul", &self, &rhs)?;
        let a = self.value();
        let b = rhs.value();
        let out = Tensor::from_parts(
            a.shape().to_vec(),
            a.data().iter().zip(b.data()).map(|(&x, &y)| x * y).collect(),
        );
        let (ia, ib) = (self.id(), rhs.id());
        Ok(self.tape().record(out, &[self, rhs], move |g, grads| {
            grads.acc(ia, |ga| {
                for ((x, &gy), &bv) in ga.iter_mut().zip(g.data()).zip(b.data()) {
                    *x = *x + gy * bv;
                }
            });
            grads.acc(ib, |gb| {
                for ((x, &gy), &av) in gb.iter_mut().zip(g.data()).zip(a.data()) {
                    *x = *x + gy * av;
                }
            });
        }))
    }

    pub fn scale(self, c: T) -> Var<'t, T> {
        let out = self.value().map(|x| x * c);
        let ia = self.id();
        self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| ga.iter_mut().zip(g.data()).for_each(|(x, &y)| *x = *x + c * y));
        })
    }

    /// Adds `bias[D]` to every row of `[.. × D]`.
    pub fn add_bias(self, bias: Var<'t, T>) -> Result<Var<'t, T>> {
        let a = self.value();
        let b = bias.value();
        if b.ndim() != 1 || b.len() != a.last_dim() {
            return Err(DvtError::shape("add_bias", a.shape(), b.shape()));
        }
        let d = b.len();
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(d) {
            row.iter_mut().zip(b.data()).for_each(|(x, &y)| *x = *x + y);
        }
        let out = Tensor::from_parts(a.shape().to_vec(), data);
        let (ia, ib) = (self.id(), bias.id());
        Ok(self.tape().record(out, &[self, bias], move |g, grads| {
            grads.acc(ia, |ga| ga.iter_mut().zip(g.data()).for_each(|(x, &y)| *x = *x + y));
            grads.acc(ib, |gb| {
                for row in g.data().chunks(d) {
                    gb.iter_mut().zip(row).for_each(|(x, &y)| *x = *x + y);
                }
            });
        }))
    }

    /// Linear layer over the last axis: `x·w (+ bias)`.
    pub fn linear(self, w: Var<'t, T>, bias: Option<Var<'t, T>>) -> Result<Var<'t, T>> {
        let y = self.matmul(w)?;
        match bias {
            Some(b) => y.add_bias(b),
            None => Ok(y),
        }
    }

    /// Selects rows of the `[rows × C]` view: output row `i` is input row `index[i]`.
    pub fn gather_rows(self, index: Rc<Vec<usize>>) -> Result<Var<'t, T>> {
        let a = self.value();
        let c = a.last_dim();
        let rows = a.rows();
        if let Some(&bad) = index.iter().find(|&&r| r >= rows) {
            return Err(DvtError::shape("gather_rows", a.shape(), &[bad]));
        }
        let mut data = Vec::with_capacity(index.len() * c);
        for &r in index.iter() {
            data.extend_from_slice(a.row(r));
        }
        let out = Tensor::from_parts(vec![index.len(), c], data);
        let ia = self.id();
        Ok(self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| {
                for (i, &r) in index.iter().enumerate() {
                    let src = &g.data()[i * c..(i + 1) * c];
                    ga[r * c..(r + 1) * c]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(x, &y)| *x = *x + y);
                }
            });
        }))
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Var<'t, T>> {
        let a = self.value();
        if shape.iter().product::<usize>() != a.len() {
            return Err(DvtError::shape("reshape", a.shape(), shape));
        }
        let out = Tensor::from_parts(shape.to_vec(), a.data().to_vec());
        let ia = self.id();
        Ok(self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| ga.iter_mut().zip(g.data()).for_each(|(x, &y)| *x = *x + y));
        }))
    }

    /// `[A × B × C] → [B × A × C]`.
    pub fn swap_leading(self) -> Result<Var<'t, T>> {
        let a = self.value();
        let s = a.shape();
        if s.len() != 3 {
            return Err(DvtError::shape("swap_leading", s, &[0, 0, 0]));
        }
        let (na, nb, nc) = (s[0], s[1], s[2]);
        let mut data = vec![T::zero(); a.len()];
        for i in 0..na {
            for j in 0..nb {
                let src = (i * nb + j) * nc;
                let dst = (j * na + i) * nc;
                data[dst..dst + nc].copy_from_slice(&a.data()[src..src + nc]);
            }
        }
        let out = Tensor::from_parts(vec![nb, na, nc], data);
        let ia = self.id();
        Ok(self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| {
                for i in 0..na {
                    for j in 0..nb {
                        let src = (j * na + i) * nc;
                        let dst = (i * nb + j) * nc;
                        for c in 0..nc {
                            ga[dst + c] = ga[dst + c] + g.data()[src + c];
                        }
                    }
                }
            });
        }))
    }

    /// Channels `[start, start + len)` of the last axis.
    pub fn slice_cols(self, start: usize, len: usize) -> Result<Var<'t, T>> {
        let a = self.value();
        let d = a.last_dim();
        if start + len > d {
            return Err(DvtError::shape("slice_cols", a.shape(), &[start, len]));
        }
        let mut data = Vec::with_capacity(a.rows() * len);
        for row in a.data().chunks(d) {
            data.extend_from_slice(&row[start..start + len]);
        }
        let out = Tensor::from_parts(with_last(a.shape(), len), data);
        let ia = self.id();
        Ok(self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| {
                for (dst, src) in ga.chunks_mut(d).zip(g.data().chunks(len)) {
                    dst[start..start + len]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(x, &y)| *x = *x + y);
                }
            });
        }))
    }

    pub fn softmax_last(self) -> Var<'t, T> {
        let a = self.value();
        let d = a.last_dim();
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(d) {
            softmax_in_place(row);
        }
        let y = Rc::new(Tensor::from_parts(a.shape().to_vec(), data));
        let ys = Rc::clone(&y);
        let ia = self.id();
        self.tape().record((*y).clone(), &[self], move |g, grads| {
            grads.acc(ia, |ga| {
                for ((gx, gy), yr) in ga.chunks_mut(d).zip(g.data().chunks(d)).zip(ys.data().chunks(d)) {
                    let dot: T = gy.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                    for i in 0..d {
                        gx[i] = gx[i] + yr[i] * (gy[i] - dot);
                    }
                }
            });
        })
    }

    /// Row-wise normalisation over the last axis followed by `gamma ∘ x̂ + beta`.
    pub fn layer_norm(self, gamma: Var<'t, T>, beta: Var<'t, T>, eps: T) -> Result<Var<'t, T>> {
        let x = self.value();
        let (gv, bv) = (gamma.value(), beta.value());
        let d = x.last_dim();
        if gv.shape() != [d] || bv.shape() != [d] {
            return Err(DvtError::shape("layer_norm", x.shape(), gv.shape()));
        }
        let rows = x.rows();
        let dn = T::from_usize(d).unwrap();
        let mut xhat = vec![T::zero(); x.len()];
        let mut inv = vec![T::zero(); rows];
        let mut out = vec![T::zero(); x.len()];
        for r in 0..rows {
            let row = x.row(r);
            let mean = row.iter().copied().sum::<T>() / dn;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / dn;
            let iv = T::one() / (var + eps).sqrt();
            inv[r] = iv;
            for i in 0..d {
                let h = (row[i] - mean) * iv;
                xhat[r * d + i] = h;
                out[r * d + i] = gv.data()[i] * h + bv.data()[i];
            }
        }
        let out = Tensor::from_parts(x.shape().to_vec(), out);
        let (ix, ig, ib) = (self.id(), gamma.id(), beta.id());
        Ok(self.tape().record(out, &[self, gamma, beta], move |g, grads| {
            let gd = g.data();
            grads.acc(ig, |gg| {
                for r in 0..rows {
                    for i in 0..d {
                        gg[i] = gg[i] + gd[r * d + i] * xhat[r * d + i];
                    }
                }
            });
            grads.acc(ib, |gb| {
                for row in gd.chunks(d) {
                    gb.iter_mut().zip(row).for_each(|(x, &y)| *x = *x + y);
                }
            });
            grads.acc(ix, |gx| {
                let mut dxh = vec![T::zero(); d];
                for r in 0..rows {
                    let mut s1 = T::zero();
                    let mut s2 = T::zero();
                    for i in 0..d {
                        dxh[i] = gd[r * d + i] * gv.data()[i];
                        s1 = s1 + dxh[i];
                        s2 = s2 + dxh[i] * xhat[r * d + i];
                    }
                    for i in 0..d {
                        let v = inv[r] / dn * (dn * dxh[i] - s1 - xhat[r * d + i] * s2);
                        gx[r * d + i] = gx[r * d + i] + v;
                    }
                }
            });
        }))
    }

    /// GELU, tanh approximation.
    pub fn gelu(self) -> Var<'t, T> {
        let x = self.value();
        let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
        let k = T::lit(0.044_715);
        let half = T::lit(0.5);
        let three = T::lit(3.0);
        let out = x.map(|v| half * v * (T::one() + (c * (v + k * v * v * v)).tanh()));
        let ia = self.id();
        self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| {
                for ((gx, &gy), &v) in ga.iter_mut().zip(g.data()).zip(x.data()) {
                    let th = (c * (v + k * v * v * v)).tanh();
                    let dv =
                        half * (T::one() + th) + half * v * (T::one() - th * th) * c * (T::one() + three * k * v * v);
                    *gx = *gx + gy * dv;
                }
            });
        })
    }

    /// Mean over all rows of the `[rows × C]` view, giving `[C]`.
    pub fn mean_rows(self) -> Var<'t, T> {
        let a = self.value();
        let c = a.last_dim();
        let rows = a.rows();
        let rn = T::from_usize(rows.max(1)).unwrap();
        let mut acc = vec![T::zero(); c];
        for row in a.data().chunks(c) {
            acc.iter_mut().zip(row).for_each(|(x, &y)| *x = *x + y);
        }
        acc.iter_mut().for_each(|x| *x = *x / rn);
        let out = Tensor::from_parts(vec![c], acc);
        let ia = self.id();
        self.tape().record(out, &[self], move |g, grads| {
            grads.acc(ia, |ga| {
                for row in ga.chunks_mut(c) {
                    row.iter_mut().zip(g.data()).for_each(|(x, &y)| *x = *x + y / rn);
                }
            });
        })
    }

    pub fn sum(self) -> Var<'t, T> {
        let a = self.value();
        let out = Tensor::scalar(a.sum());
        let ia = self.id();
        self.tape().record(out, &[self], move |g, grads| {
            let gy = g.data()[0];
            grads.acc(ia, |ga| ga.iter_mut().for_each(|x| *x = *x + gy));
        })
    }

    /// `Σ self ∘ weights` with a constant weight tensor.
    pub fn dot_const(self, weights: &Tensor<T>) -> Result<Var<'t, T>> {
        let a = self.value();
        if a.len() != weights.len() {
            return Err(DvtError::shape("dot_const", a.shape(), weights.shape()));
        }
        let w = Rc::new(weights.clone());
        let out = Tensor::scalar(a.data().iter().zip(w.data()).map(|(&x, &y)| x * y).sum());
        let ia = self.id();
        Ok(self.tape().record(out, &[self], move |g, grads| {
            let gy = g.data()[0];
            grads.acc(ia, |ga| {
                ga.iter_mut().zip(w.data()).for_each(|(x, &y)| *x = *x + gy * y)
            });
        }))
    }

    /// Cross-entropy of a logit vector against a class index.
    pub fn cross_entropy(self, label: usize) -> Result<Var<'t, T>> {
        let a = self.value();
        if label >= a.len() {
            return Err(DvtError::Domain(format!(
                "label {label} out of range for {} classes",
                a.len()
            )));
        }
        let mut p = a.data().to_vec();
        softmax_in_place(&mut p);
        let max = a.data().iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + a.data().iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let out = Tensor::scalar(lse - a.data()[label]);
        let ia = self.id();
        Ok(self.tape().record(out, &[self], move |g, grads| {
            let gy = g.data()[0];
            grads.acc(ia, |ga| {
                for (i, x) in ga.iter_mut().enumerate() {
                    let onehot = if i == label { T::one() } else { T::zero() };
                    *x = *x + gy * (p[i] - onehot);
                }
            });
        }))
    }
}

/// Stacks `[rows_i × C]` views into `[Σ rows_i × C]`.
pub fn concat_rows<'t, T: Scalar>(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    let first = parts
        .first()
        .ok_or_else(|| DvtError::config("concat_rows of nothing"))?;
    let c = first.value().last_dim();
    let values: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
    let mut data = Vec::new();
    let mut spans = Vec::with_capacity(parts.len());
    for v in &values {
        if v.last_dim() != c {
            return Err(DvtError::shape("concat_rows", first.value().shape(), v.shape()));
        }
        spans.push((data.len(), v.len()));
        data.extend_from_slice(v.data());
    }
    let rows = data.len() / c.max(1);
    let ids: Vec<usize> = parts.iter().map(|p| p.id()).collect();
    let out = Tensor::from_parts(vec![rows, c], data);
    Ok(first.tape().record(out, parts, move |g, grads| {
        for (&id, &(start, len)) in ids.iter().zip(&spans) {
            grads.acc(id, |ga| {
                ga.iter_mut()
                    .zip(&g.data()[start..start + len])
                    .for_each(|(x, &y)| *x = *x + y)
            });
        }
    }))
}

/// Concatenates along the last axis; all parts share their row count.
pub fn concat_cols<'t, T: Scalar>(parts: &[Var<'t, T>]) -> Result<Var<'t, T>> {
    let first = parts
        .first()
        .ok_or_else(|| DvtError::config("concat_cols of nothing"))?;
    let values: Vec<Rc<Tensor<T>>> = parts.iter().map(|p| p.value()).collect();
    let rows = values[0].rows();
    let widths: Vec<usize> = values.iter().map(|v| v.last_dim()).collect();
    for v in &values {
        if v.rows() != rows {
            return Err(DvtError::shape("concat_cols", values[0].shape(), v.shape()));
        }
    }
    let total: usize = widths.iter().sum();
    let mut data = Vec::with_capacity(rows * total);
    for r in 0..rows {
        for v in &values {
            data.extend_from_slice(v.row(r));
        }
    }
    let out = Tensor::from_parts(with_last(values[0].shape(), total), data);
    let ids: Vec<usize> = parts.iter().map(|p| p.id()).collect();
    Ok(first.tape().record(out, parts, move |g, grads| {
        let mut start = 0;
        for (&id, &w) in ids.iter().zip(&widths) {
            grads.acc(id, |ga| {
                for r in 0..rows {
                    let src = &g.data()[r * total + start..r * total + start + w];
                    ga[r * w..(r + 1) * w]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(x, &y)| *x = *x + y);
                }
            });
            start += w;
        }
    }))
}

/// Numerically stable softmax of one row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for x in row.iter_mut() {
        *x = (*x - max).exp();
        total = total + *x;
    }
    for x in row.iter_mut() {
        *x = *x / total;
    }
}
