//! Naive per-query loop implementations of every attention scheme, written
//! against the raw parameter tensors, shared by the integration tests.

#![allow(dead_code)]

use dvt_core::attention::{
    divided_attention, dmsa_forward, dsta_forward, global_st_attention, AttnConfig, Axis, DeformParams,
    MultiScaleParams, QkvParams, Scheme,
};
use dvt_core::motioncue::{CueBank, CueKind, SubClips};
use dvt_core::numerics::{ParamId, ParamStore, Rng, Tape, Tensor};
use dvt_core::tokenization::{GridGeom, TokenGrid};

pub type Mat = Vec<Vec<f64>>;
pub type Frames = Vec<Vec<Vec<Vec<f64>>>>;

pub fn mat(t: &Tensor<f64>) -> Mat {
    let c = t.last_dim();
    t.data().chunks(c).map(|r| r.to_vec()).collect()
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(&x, br)| x * br[j]).sum())
                .collect()
        })
        .collect()
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| x / s).collect()
}

/// Bilinear read of `frame[y][x][c]` with coordinates clamped to the grid.
pub fn bilerp(frame: &[Vec<Vec<f64>>], y: f64, x: f64, c: usize) -> f64 {
    let (h, w) = (frame.len(), frame[0].len());
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
    (1.0 - fy) * ((1.0 - fx) * frame[y0][x0][c] + fx * frame[y0][x1][c])
        + fy * ((1.0 - fx) * frame[y1][x0][c] + fx * frame[y1][x1][c])
}

pub fn to_frames(rows: &Mat, frames: usize, h: usize, w: usize) -> Frames {
    (0..frames)
        .map(|t| {
            (0..h)
                .map(|y| (0..w).map(|x| rows[(t * h + y) * w + x].clone()).collect())
                .collect()
        })
        .collect()
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn close(a: &[f64], b: &[f64], tol: f64) {
    let worst = max_gap(a, b);
    assert!(worst < tol, "max abs diff {worst:e}");
}

pub fn randomize(store: &mut ParamStore<f64>, id: ParamId, rng: &mut Rng, scale: f64) {
    let shape = store.get(id).shape().to_vec();
    store.set(id, rng.uniform_tensor(&shape, -scale, scale));
}

/// `x + attention` with a softmax over the keys `j` for which `group(i, j)`.
pub fn dense_oracle(x: &Mat, wq: &Mat, wk: &Mat, wv: &Mat, heads: usize, group: impl Fn(usize, usize) -> bool) -> Mat {
    let (q, k, v) = (mm(x, wq), mm(x, wk), mm(x, wv));
    let (n, d) = (x.len(), x[0].len());
    let hd = d / heads;
    let mut out = x.clone();
    for i in 0..n {
        for h in 0..heads {
            let cs = h * hd..(h + 1) * hd;
            let js: Vec<usize> = (0..n).filter(|&j| group(i, j)).collect();
            let logits: Vec<f64> = js
                .iter()
                .map(|&j| cs.clone().map(|c| q[i][c] * k[j][c]).sum())
                .collect();
            let a = softmax(&logits);
            for c in cs.clone() {
                out[i][c] += js.iter().zip(&a).map(|(&j, &w)| w * v[j][c]).sum::<f64>();
            }
        }
    }
    out
}

/// Library output minus the loop oracle for a dense scheme.
pub fn dense_gap(scheme: Scheme, g: GridGeom, d: usize, heads: usize, seed: u64) -> f64 {
    let s = g.sites();
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    let qkv = QkvParams::init(&mut store, &rng, "d", d);
    let x = rng.normal_tensor(&[g.frames, s, d], 1.0);
    let xm = mat(&x.clone().reshape(&[g.tokens(), d]).unwrap());
    let (wq, wk, wv) = (mat(store.get(qkv.wq)), mat(store.get(qkv.wk)), mat(store.get(qkv.wv)));
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let z = TokenGrid::new(tape.constant(x), g).unwrap();
    let (lib, oracle) = match scheme {
        Scheme::Global => (
            global_st_attention(&z, &qkv, &bound, heads, None).unwrap(),
            dense_oracle(&xm, &wq, &wk, &wv, heads, |_, _| true),
        ),
        Scheme::Space => (
            divided_attention(&z, &qkv, &bound, heads, Axis::Space, None).unwrap(),
            dense_oracle(&xm, &wq, &wk, &wv, heads, |i, j| i / s == j / s),
        ),
        Scheme::Time => (
            divided_attention(&z, &qkv, &bound, heads, Axis::Time, None).unwrap(),
            dense_oracle(&xm, &wq, &wk, &wv, heads, |i, j| i % s == j % s),
        ),
        _ => panic!("{scheme} is not dense"),
    };
    max_gap(lib.tokens.value().data(), &oracle.concat())
}

pub struct DstaCase {
    pub g: GridGeom,
    pub d: usize,
    pub cfg: AttnConfig,
    pub store: ParamStore<f64>,
    pub p: DeformParams,
    pub bank: CueBank<f64>,
    pub x: Tensor<f64>,
}

/// Random deformable space-time layer with non-zero offset and logit
/// weights and random cues (cue patch 2).
pub fn dsta_case(g: GridGeom, d: usize, cfg: AttnConfig, seed: u64) -> DstaCase {
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    let p = DeformParams::init(&mut store, &rng, "s", d, &cfg, CueKind::Md, 2);
    randomize(&mut store, p.w_delta, &mut rng, 0.8);
    randomize(&mut store, p.w_alpha, &mut rng, 0.8);
    let sc = SubClips::new(g.frames, cfg.subclips).unwrap();
    let mut bank = CueBank::zeros(CueKind::Md, sc, g.sites(), 2);
    let shape = bank.data.shape().to_vec();
    bank.data = rng.uniform_tensor(&shape, -1.0, 1.0);
    let x = rng.normal_tensor(&[g.frames, g.sites(), d], 1.0);
    DstaCase {
        g,
        d,
        cfg,
        store,
        p,
        bank,
        x,
    }
}

/// Per query (t, s) and head: every frame t' of the sub-clip, N samples at
/// `(row, col) + Δ`, one softmax over all `T'·N` logits. Returns the
/// aggregate (no residual) and the weights in trace order.
pub fn dsta_oracle(c: &DstaCase) -> (Mat, Vec<f64>) {
    let (g, d, cfg) = (c.g, c.d, &c.cfg);
    let x = mat(&c.x.clone().reshape(&[g.tokens(), d]).unwrap());
    let q = mm(&x, &mat(c.store.get(c.p.wq)));
    let v = to_frames(&mm(&x, &mat(c.store.get(c.p.wv))), g.frames, g.grid_h, g.grid_w);
    let m = mm(&mat(&c.bank.data), &mat(c.store.get(c.p.tokenizer.weight)));
    let (wd, wa) = (mat(c.store.get(c.p.w_delta)), mat(c.store.get(c.p.w_alpha)));
    let (s_count, span, n_s, hd) = (g.sites(), c.bank.span(), cfg.samples, d / cfg.heads);
    let mut out = vec![vec![0.0; d]; g.tokens()];
    let mut weights = Vec::new();
    for t in 0..g.frames {
        let start = (t / span) * span;
        for s in 0..s_count {
            let (row, col) = (s / g.grid_w, s % g.grid_w);
            let src = if cfg.offset_from_raw_token { &x } else { &q };
            for h in 0..cfg.heads {
                let mut logits = Vec::new();
                let mut points = Vec::new();
                for j in 0..span {
                    let pair = (t * span + j) * s_count + s;
                    let u: Vec<f64> = (0..d).map(|k| src[t * s_count + s][k] + m[pair][k]).collect();
                    for n in 0..n_s {
                        let col_of = |w: &Mat, idx: usize| -> f64 { (0..d).map(|k| u[k] * w[k][idx]).sum() };
                        let dy = col_of(&wd, (h * n_s + n) * 2);
                        let dx = col_of(&wd, (h * n_s + n) * 2 + 1);
                        logits.push(col_of(&wa, h * n_s + n));
                        points.push((start + j, row as f64 + dy, col as f64 + dx));
                    }
                }
                let a = softmax(&logits);
                weights.extend(a.iter().cloned());
                for cc in h * hd..(h + 1) * hd {
                    out[t * s_count + s][cc] = points
                        .iter()
                        .zip(&a)
                        .map(|(&(tp, y, xx), &w)| w * bilerp(&v[tp], y, xx, cc))
                        .sum();
                }
            }
        }
    }
    (out, weights)
}

/// Output and traced-weight gaps of the library against [`dsta_oracle`].
pub fn dsta_gap(c: &DstaCase) -> (f64, f64) {
    let tape = Tape::new();
    let bound = c.store.bind(&tape);
    let z = TokenGrid::new(tape.constant(c.x.clone()), c.g).unwrap();
    let (out, trace) = dsta_forward(&z, &c.bank, &c.p, &bound, &c.cfg, None).unwrap();
    let (agg, weights) = dsta_oracle(c);
    let expect: Vec<f64> = c.x.data().iter().zip(agg.concat()).map(|(a, b)| a + b).collect();
    let traced: Vec<f64> = trace
        .records
        .iter()
        .flat_map(|r| r.samples.iter().map(|s| s.w))
        .collect();
    (max_gap(out.tokens.value().data(), &expect), max_gap(&traced, &weights))
}

/// Zero-padded 3×3×3 convolution with strides `(1, r, r)`.
pub fn conv_oracle(x: &[Vec<Vec<Vec<f64>>>], k: &Tensor<f64>, r: usize) -> Frames {
    let (t, h, w, ci) = (x.len(), x[0].len(), x[0][0].len(), x[0][0][0].len());
    let co = k.shape()[4];
    let (ho, wo) = (h.div_ceil(r), w.div_ceil(r));
    let mut out = vec![vec![vec![vec![0.0; co]; wo]; ho]; t];
    for (to, plane) in out.iter_mut().enumerate() {
        for (yo, line) in plane.iter_mut().enumerate() {
            for (xo, px) in line.iter_mut().enumerate() {
                for kt in 0..3 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let ti = to as isize + kt as isize - 1;
                            let yi = (yo * r) as isize + ky as isize - 1;
                            let xi = (xo * r) as isize + kx as isize - 1;
                            if ti < 0 || yi < 0 || xi < 0 || ti >= t as isize || yi >= h as isize || xi >= w as isize {
                                continue;
                            }
                            let src = &x[ti as usize][yi as usize][xi as usize];
                            for (o, val) in px.iter_mut().enumerate() {
                                *val += (0..ci).map(|c| src[c] * k.at(&[kt, ky, kx, c, o])).sum::<f64>();
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Library D-MS-A output minus a loop oracle built on [`conv_oracle`].
pub fn dmsa_gap(g: GridGeom, d: usize, cfg: AttnConfig, seed: u64) -> f64 {
    let mut rng = Rng::new(seed);
    let mut store = ParamStore::new();
    let ms = MultiScaleParams::init(&mut store, &rng, "m", d, &cfg);
    for sp in &ms.scales {
        randomize(&mut store, sp.w_delta, &mut rng, 0.8);
        randomize(&mut store, sp.w_alpha, &mut rng, 0.8);
    }
    let x = rng.normal_tensor(&[g.frames, g.sites(), d], 1.0);

    let xf = to_frames(
        &mat(&x.clone().reshape(&[g.tokens(), d]).unwrap()),
        g.frames,
        g.grid_h,
        g.grid_w,
    );
    struct Scale {
        r: usize,
        feat: Frames,
        v: Frames,
        wq: Mat,
        wd: Mat,
        wa: Mat,
    }
    let scales: Vec<Scale> = ms
        .scales
        .iter()
        .map(|sp| {
            let feat = conv_oracle(&xf, store.get(sp.conv), sp.stride);
            let wv = mat(store.get(sp.wv));
            let v = feat
                .iter()
                .map(|pl| pl.iter().map(|ln| mm(ln, &wv)).collect())
                .collect();
            Scale {
                r: sp.stride,
                feat,
                v,
                wq: mat(store.get(sp.wq)),
                wd: mat(store.get(sp.w_delta)),
                wa: mat(store.get(sp.w_alpha)),
            }
        })
        .collect();
    let (hd, n_ms) = (d / cfg.heads, cfg.ms_samples);
    let mut expect = mat(&x.clone().reshape(&[g.tokens(), d]).unwrap());
    for t in 0..g.frames {
        for s in 0..g.sites() {
            let (row, col) = (s / g.grid_w, s % g.grid_w);
            for h in 0..cfg.heads {
                let mut logits = Vec::new();
                let mut points = Vec::new();
                for (f, sc) in scales.iter().enumerate() {
                    let (by, bx) = (row as f64 / sc.r as f64, col as f64 / sc.r as f64);
                    let qf: Vec<f64> = (0..d).map(|c| bilerp(&sc.feat[t], by, bx, c)).collect();
                    let q = mm(&vec![qf], &sc.wq).remove(0);
                    let dot = |w: &Mat, j: usize| -> f64 { (0..d).map(|k| q[k] * w[k][j]).sum() };
                    for n in 0..n_ms {
                        let dy = dot(&sc.wd, (h * n_ms + n) * 2);
                        let dx = dot(&sc.wd, (h * n_ms + n) * 2 + 1);
                        logits.push(dot(&sc.wa, h * n_ms + n));
                        points.push((f, by + dy, bx + dx));
                    }
                }
                let a = softmax(&logits);
                for c in h * hd..(h + 1) * hd {
                    expect[t * g.sites() + s][c] += points
                        .iter()
                        .zip(&a)
                        .map(|(&(f, y, xx), &w)| w * bilerp(&scales[f].v[t], y, xx, c))
                        .sum::<f64>();
                }
            }
        }
    }
    let tape = Tape::new();
    let bound = store.bind(&tape);
    let z = TokenGrid::new(tape.constant(x), g).unwrap();
    let (out, _) = dmsa_forward(&z, &ms, &bound, &cfg, None).unwrap();
    max_gap(out.tokens.value().data(), &expect.concat())
}

/// Largest library-vs-oracle gap for one random configuration.
pub fn scheme_gap(cfg: AttnConfig, g: GridGeom, d: usize, seed: u64) -> f64 {
    match cfg.scheme {
        Scheme::Global | Scheme::Space | Scheme::Time => dense_gap(cfg.scheme, g, d, cfg.heads, seed),
        Scheme::Dsta => {
            let (a, b) = dsta_gap(&dsta_case(g, d, cfg, seed));
            let (c, e) = dsta_gap(&dsta_case(
                g,
                d,
                AttnConfig {
                    offset_from_raw_token: true,
                    ..cfg
                },
                seed,
            ));
            a.max(b).max(c).max(e)
        }
        Scheme::Dmsa => dmsa_gap(g, d, cfg, seed),
        Scheme::DstMs => 0.0,
    }
}
