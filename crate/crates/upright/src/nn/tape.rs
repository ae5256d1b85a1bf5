//! The computation tape and its operators.
//!
//! Nodes are appended in forward order; every node optionally carries a
//! backward closure that distributes its gradient to earlier nodes.
//! Parents always precede children, so one reverse sweep suffices.

use crate::nn::params::ParamSet;
use std::rc::Rc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

type BackFn = Box<dyn Fn(&[f64], &mut [Vec<f64>])>;

struct Node {
    value: Rc<Vec<f64>>,
    shape: Vec<usize>,
    back: Option<BackFn>,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by one backward sweep, indexed by tensor id.
pub struct Grads {
    grads: Vec<Vec<f64>>,
}

impl Grads {
    pub fn of(&self, id: TensorId) -> &[f64] {
        &self.grads[id.0]
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn scalar(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.value(id).len(), 1);
        self.value(id)[0]
    }

    fn push(&mut self, value: Vec<f64>, shape: Vec<usize>, back: Option<BackFn>) -> TensorId {
        debug_assert_eq!(value.len(), numel(&shape));
        debug_assert!(
            value.iter().all(|v| v.is_finite()),
            "non-finite value out of a forward op"
        );
        self.nodes.push(Node { value: Rc::new(value), shape, back });
        TensorId(self.nodes.len() - 1)
    }

    fn val(&self, id: TensorId) -> Rc<Vec<f64>> {
        Rc::clone(&self.nodes[id.0].value)
    }

    /// Leaf tensor (an input or a parameter copy).
    pub fn leaf(&mut self, value: Vec<f64>, shape: Vec<usize>) -> TensorId {
        self.push(value, shape, None)
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: TensorId) -> Grads {
        assert_eq!(self.value(loss).len(), 1, "backward needs a scalar loss");
        let mut grads: Vec<Vec<f64>> =
            self.nodes.iter().map(|n| vec![0.0; n.value.len()]).collect();
        grads[loss.0][0] = 1.0;
        for i in (0..=loss.0).rev() {
            if let Some(back) = &self.nodes[i].back {
                let g = std::mem::take(&mut grads[i]);
                back(&g, &mut grads);
                grads[i] = g;
            }
        }
        Grads { grads }
    }

    // ---- elementwise ----

    fn same_shape(&self, a: TensorId, b: TensorId, op: &str) {
        assert_eq!(self.shape(a), self.shape(b), "{op}: shape mismatch");
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.same_shape(a, b, "add");
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi;
                    grads[bi][i] += gi;
                }
            })),
        )
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.same_shape(a, b, "sub");
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi;
                    grads[bi][i] -= gi;
                }
            })),
        )
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.same_shape(a, b, "mul");
        let va = self.val(a);
        let vb = self.val(b);
        let out: Vec<f64> = va.iter().zip(vb.iter()).map(|(x, y)| x * y).collect();
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi * vb[i];
                    grads[bi][i] += gi * va[i];
                }
            })),
        )
    }

    pub fn div(&mut self, a: TensorId, b: TensorId) -> TensorId {
        self.same_shape(a, b, "div");
        let va = self.val(a);
        let vb = self.val(b);
        let out: Vec<f64> = va.iter().zip(vb.iter()).map(|(x, y)| x / y).collect();
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi / vb[i];
                    grads[bi][i] -= gi * va[i] / (vb[i] * vb[i]);
                }
            })),
        )
    }

    pub fn scale(&mut self, a: TensorId, c: f64) -> TensorId {
        let out: Vec<f64> = self.value(a).iter().map(|x| x * c).collect();
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi * c;
                }
            })),
        )
    }

    pub fn add_scalar(&mut self, a: TensorId, c: f64) -> TensorId {
        let out: Vec<f64> = self.value(a).iter().map(|x| x + c).collect();
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi;
                }
            })),
        )
    }

    pub fn relu(&mut self, a: TensorId) -> TensorId {
        let va = self.val(a);
        let out: Vec<f64> = va.iter().map(|x| x.max(0.0)).collect();
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    if va[i] > 0.0 {
                        grads[ai][i] += gi;
                    }
                }
            })),
        )
    }

    pub fn sigmoid(&mut self, a: TensorId) -> TensorId {
        let out: Vec<f64> = self.value(a).iter().map(|x| 1.0 / (1.0 + (-x).exp())).collect();
        let y = Rc::new(out.clone());
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi * y[i] * (1.0 - y[i]);
                }
            })),
        )
    }

    pub fn tanh(&mut self, a: TensorId) -> TensorId {
        let out: Vec<f64> = self.value(a).iter().map(|x| x.tanh()).collect();
        let y = Rc::new(out.clone());
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi * (1.0 - y[i] * y[i]);
                }
            })),
        )
    }

    /// Natural log; inputs must be positive (callers add an epsilon).
    pub fn log(&mut self, a: TensorId) -> TensorId {
        let va = self.val(a);
        let out: Vec<f64> = va.iter().map(|x| x.ln()).collect();
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi / va[i];
                }
            })),
        )
    }

    pub fn abs(&mut self, a: TensorId) -> TensorId {
        let va = self.val(a);
        let out: Vec<f64> = va.iter().map(|x| x.abs()).collect();
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi * va[i].signum();
                }
            })),
        )
    }

    /// Elementwise smooth L1: `0.5 x^2` for `|x| <= 1`, `|x| - 0.5` beyond.
    pub fn smooth_l1(&mut self, a: TensorId) -> TensorId {
        let va = self.val(a);
        let out: Vec<f64> = va
            .iter()
            .map(|x| if x.abs() <= 1.0 { 0.5 * x * x } else { x.abs() - 0.5 })
            .collect();
        let ai = a.0;
        self.push(
            out,
            self.nodes[a.0].shape.clone(),
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    let d = if va[i].abs() <= 1.0 { va[i] } else { va[i].signum() };
                    grads[ai][i] += gi * d;
                }
            })),
        )
    }

    pub fn sum_all(&mut self, a: TensorId) -> TensorId {
        let s: f64 = self.value(a).iter().sum();
        let ai = a.0;
        self.push(
            vec![s],
            vec![1],
            Some(Box::new(move |g, grads| {
                for gi in grads[ai].iter_mut() {
                    *gi += g[0];
                }
            })),
        )
    }

    pub fn mean_all(&mut self, a: TensorId) -> TensorId {
        let n = self.value(a).len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    // ---- linear algebra ----

    /// `a` is `[m, k]`, `b` is `[k, n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
        let (k2, n) = (self.shape(b)[0], self.shape(b)[1]);
        assert_eq!(k, k2, "matmul inner dim");
        let va = self.val(a);
        let vb = self.val(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let x = va[i * k + kk];
                let brow = &vb[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, bb) in orow.iter_mut().zip(brow) {
                    *o += x * bb;
                }
            }
        }
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            vec![m, n],
            Some(Box::new(move |g, grads| {
                // dA = g . B^T ; dB = A^T . g
                for i in 0..m {
                    for kk in 0..k {
                        let mut acc = 0.0;
                        for j in 0..n {
                            acc += g[i * n + j] * vb[kk * n + j];
                        }
                        grads[ai][i * k + kk] += acc;
                    }
                }
                for kk in 0..k {
                    for j in 0..n {
                        let mut acc = 0.0;
                        for i in 0..m {
                            acc += va[i * k + kk] * g[i * n + j];
                        }
                        grads[bi][kk * n + j] += acc;
                    }
                }
            })),
        )
    }

    /// Transpose a 2-D tensor.
    pub fn transpose(&mut self, a: TensorId) -> TensorId {
        let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
        let va = self.val(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = va[i * n + j];
            }
        }
        let ai = a.0;
        self.push(
            out,
            vec![n, m],
            Some(Box::new(move |g, grads| {
                for i in 0..m {
                    for j in 0..n {
                        grads[ai][i * n + j] += g[j * m + i];
                    }
                }
            })),
        )
    }

    /// Broadcast-add a `[n]` row vector to every row of `[m, n]`.
    pub fn add_row(&mut self, a: TensorId, b: TensorId) -> TensorId {
        let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
        assert_eq!(self.value(b).len(), n, "add_row width");
        let vb = self.val(b);
        let out: Vec<f64> =
            self.value(a).iter().enumerate().map(|(i, x)| x + vb[i % n]).collect();
        let (ai, bi) = (a.0, b.0);
        self.push(
            out,
            vec![m, n],
            Some(Box::new(move |g, grads| {
                for i in 0..m {
                    for j in 0..n {
                        grads[ai][i * n + j] += g[i * n + j];
                        grads[bi][j] += g[i * n + j];
                    }
                }
            })),
        )
    }

    /// Fully connected layer: `x [m, k] . w [k, n] + b [n]`.
    pub fn linear(&mut self, x: TensorId, w: TensorId, b: TensorId) -> TensorId {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    /// Row-wise softmax of `[m, n]`.
    pub fn softmax_rows(&mut self, a: TensorId) -> TensorId {
        let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
        let va = self.val(a);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &va[i * n..(i + 1) * n];
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                s += e;
            }
            for j in 0..n {
                out[i * n + j] /= s;
            }
        }
        let y = Rc::new(out.clone());
        let ai = a.0;
        self.push(
            out,
            vec![m, n],
            Some(Box::new(move |g, grads| {
                for i in 0..m {
                    let yr = &y[i * n..(i + 1) * n];
                    let gr = &g[i * n..(i + 1) * n];
                    let dot: f64 = yr.iter().zip(gr).map(|(yy, gg)| yy * gg).sum();
                    for j in 0..n {
                        grads[ai][i * n + j] += yr[j] * (gr[j] - dot);
                    }
                }
            })),
        )
    }

    /// Per-row layer normalization of `[t, d]` with gain/shift `[d]`.
    pub fn layer_norm(&mut self, x: TensorId, gain: TensorId, shift: TensorId) -> TensorId {
        const EPS: f64 = 1e-5;
        let (t, d) = (self.shape(x)[0], self.shape(x)[1]);
        assert_eq!(self.value(gain).len(), d);
        assert_eq!(self.value(shift).len(), d);
        let vx = self.val(x);
        let vg = self.val(gain);
        let vs = self.val(shift);
        let mut xhat = vec![0.0; t * d];
        let mut inv_std = vec![0.0; t];
        for i in 0..t {
            let row = &vx[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let istd = 1.0 / (var + EPS).sqrt();
            inv_std[i] = istd;
            for j in 0..d {
                xhat[i * d + j] = (row[j] - mean) * istd;
            }
        }
        let out: Vec<f64> =
            xhat.iter().enumerate().map(|(i, h)| h * vg[i % d] + vs[i % d]).collect();
        let xhat = Rc::new(xhat);
        let inv_std = Rc::new(inv_std);
        let (xi, gi_, si) = (x.0, gain.0, shift.0);
        self.push(
            out,
            vec![t, d],
            Some(Box::new(move |g, grads| {
                for i in 0..t {
                    let hr = &xhat[i * d..(i + 1) * d];
                    let gr = &g[i * d..(i + 1) * d];
                    // through gain/shift
                    let mut dh = vec![0.0; d];
                    for j in 0..d {
                        grads[gi_][j] += gr[j] * hr[j];
                        grads[si][j] += gr[j];
                        dh[j] = gr[j] * vg[j];
                    }
                    let sum_dh: f64 = dh.iter().sum();
                    let sum_dh_h: f64 = dh.iter().zip(hr).map(|(a, b)| a * b).sum();
                    let istd = inv_std[i];
                    for j in 0..d {
                        grads[xi][i * d + j] +=
                            istd / d as f64 * (d as f64 * dh[j] - sum_dh - hr[j] * sum_dh_h);
                    }
                }
            })),
        )
    }

    // ---- shape ops ----

    pub fn reshape(&mut self, a: TensorId, shape: Vec<usize>) -> TensorId {
        assert_eq!(numel(&shape), self.value(a).len(), "reshape numel");
        let out = self.value(a).to_vec();
        let ai = a.0;
        self.push(
            out,
            shape,
            Some(Box::new(move |g, grads| {
                for (i, gi) in g.iter().enumerate() {
                    grads[ai][i] += gi;
                }
            })),
        )
    }

    /// Concatenate 2-D tensors along columns (axis 1).
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> TensorId {
        let m = self.shape(parts[0])[0];
        let widths: Vec<usize> = parts.iter().map(|p| self.shape(*p)[1]).collect();
        for p in parts {
            assert_eq!(self.shape(*p)[0], m, "concat_cols rows");
        }
        let n: usize = widths.iter().sum();
        let mut out = vec![0.0; m * n];
        let mut offset = 0;
        for (p, w) in parts.iter().zip(&widths) {
            let v = self.val(*p);
            for i in 0..m {
                out[i * n + offset..i * n + offset + w].copy_from_slice(&v[i * w..(i + 1) * w]);
            }
            offset += w;
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let widths_c = widths.clone();
        self.push(
            out,
            vec![m, n],
            Some(Box::new(move |g, grads| {
                let mut offset = 0;
                for (pi, w) in ids.iter().zip(&widths_c) {
                    for i in 0..m {
                        for j in 0..*w {
                            grads[*pi][i * w + j] += g[i * n + offset + j];
                        }
                    }
                    offset += w;
                }
            })),
        )
    }

    /// Concatenate 2-D tensors along rows (axis 0).
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> TensorId {
        let n = self.shape(parts[0])[1];
        for p in parts {
            assert_eq!(self.shape(*p)[1], n, "concat_rows cols");
        }
        let heights: Vec<usize> = parts.iter().map(|p| self.shape(*p)[0]).collect();
        let m: usize = heights.iter().sum();
        let mut out = Vec::with_capacity(m * n);
        for p in parts {
            out.extend_from_slice(&self.value(*p).to_vec());
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        let heights_c = heights.clone();
        self.push(
            out,
            vec![m, n],
            Some(Box::new(move |g, grads| {
                let mut row = 0;
                for (pi, h) in ids.iter().zip(&heights_c) {
                    for i in 0..*h {
                        for j in 0..n {
                            grads[*pi][i * n + j] += g[(row + i) * n + j];
                        }
                    }
                    row += h;
                }
            })),
        )
    }

    /// Columns `[lo, hi)` of a 2-D tensor.
    pub fn slice_cols(&mut self, a: TensorId, lo: usize, hi: usize) -> TensorId {
        let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
        assert!(lo < hi && hi <= n);
        let va = self.val(a);
        let w = hi - lo;
        let mut out = vec![0.0; m * w];
        for i in 0..m {
            out[i * w..(i + 1) * w].copy_from_slice(&va[i * n + lo..i * n + hi]);
        }
        let ai = a.0;
        self.push(
            out,
            vec![m, w],
            Some(Box::new(move |g, grads| {
                for i in 0..m {
                    for j in 0..w {
                        grads[ai][i * n + lo + j] += g[i * w + j];
                    }
                }
            })),
        )
    }

    /// Rows `[lo, hi)` of a 2-D tensor.
    pub fn slice_rows(&mut self, a: TensorId, lo: usize, hi: usize) -> TensorId {
        let (m, n) = (self.shape(a)[0], self.shape(a)[1]);
        assert!(lo < hi && hi <= m);
        let out = self.value(a)[lo * n..hi * n].to_vec();
        let ai = a.0;
        let h = hi - lo;
        self.push(
            out,
            vec![h, n],
            Some(Box::new(move |g, grads| {
                for i in 0..h * n {
                    grads[ai][lo * n + i] += g[i];
                }
            })),
        )
    }

    /// Gather rows of an embedding table `[vocab, d]`.
    pub fn embedding(&mut self, table: TensorId, indices: &[usize]) -> TensorId {
        let (vocab, d) = (self.shape(table)[0], self.shape(table)[1]);
        let vt = self.val(table);
        let mut out = Vec::with_capacity(indices.len() * d);
        for &ix in indices {
            assert!(ix < vocab, "embedding index {ix} out of vocabulary {vocab}");
            out.extend_from_slice(&vt[ix * d..(ix + 1) * d]);
        }
        let ti = table.0;
        let idx = indices.to_vec();
        self.push(
            out,
            vec![indices.len(), d],
            Some(Box::new(move |g, grads| {
                for (row, &ix) in idx.iter().enumerate() {
                    for j in 0..d {
                        grads[ti][ix * d + j] += g[row * d + j];
                    }
                }
            })),
        )
    }

    // ---- spatial ops (NCHW) ----

    /// Cross-correlation with zero padding.
    /// input `[n, cin, h, w]`, weight `[cout, cin, kh, kw]`, bias `[cout]`.
    pub fn conv2d(
        &mut self,
        input: TensorId,
        weight: TensorId,
        bias: Option<TensorId>,
        stride: usize,
        padding: usize,
    ) -> TensorId {
        let ishape = self.shape(input).to_vec();
        let wshape = self.shape(weight).to_vec();
        assert_eq!(ishape.len(), 4, "conv2d input must be NCHW");
        assert_eq!(wshape.len(), 4, "conv2d weight must be [cout, cin, kh, kw]");
        let (n, cin, h, w) = (ishape[0], ishape[1], ishape[2], ishape[3]);
        let (cout, cin2, kh, kw) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        assert_eq!(cin, cin2, "conv2d channel mismatch");
        assert!(h + 2 * padding >= kh && w + 2 * padding >= kw, "conv2d kernel larger than input");
        let oh = (h + 2 * padding - kh) / stride + 1;
        let ow = (w + 2 * padding - kw) / stride + 1;
        let vi = self.val(input);
        let vw = self.val(weight);
        let vb = bias.map(|b| {
            assert_eq!(self.value(b).len(), cout, "conv2d bias length");
            self.val(b)
        });
        let mut out = vec![0.0; n * cout * oh * ow];
        for b_ in 0..n {
            for co in 0..cout {
                let obase = (b_ * cout + co) * oh * ow;
                if let Some(vb) = &vb {
                    for o in &mut out[obase..obase + oh * ow] {
                        *o = vb[co];
                    }
                }
                for ci in 0..cin {
                    let ibase = (b_ * cin + ci) * h * w;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let wt = vw[((co * cin + ci) * kh + ky) * kw + kx];
                            if wt == 0.0 {
                                continue;
                            }
                            for oy in 0..oh {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                if iy < 0 || iy >= h as isize {
                                    continue;
                                }
                                let irow = ibase + iy as usize * w;
                                let orow = obase + oy * ow;
                                for ox in 0..ow {
                                    let ix = (ox * stride + kx) as isize - padding as isize;
                                    if ix < 0 || ix >= w as isize {
                                        continue;
                                    }
                                    out[orow + ox] += wt * vi[irow + ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        let (ii, wi) = (input.0, weight.0);
        let bi = bias.map(|b| b.0);
        self.push(
            out,
            vec![n, cout, oh, ow],
            Some(Box::new(move |g, grads| {
                for b_ in 0..n {
                    for co in 0..cout {
                        let obase = (b_ * cout + co) * oh * ow;
                        if let Some(bi) = bi {
                            let mut acc = 0.0;
                            for gv in &g[obase..obase + oh * ow] {
                                acc += gv;
                            }
                            grads[bi][co] += acc;
                        }
                        for ci in 0..cin {
                            let ibase = (b_ * cin + ci) * h * w;
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let widx = ((co * cin + ci) * kh + ky) * kw + kx;
                                    let wt = vw[widx];
                                    let mut wacc = 0.0;
                                    for oy in 0..oh {
                                        let iy = (oy * stride + ky) as isize - padding as isize;
                                        if iy < 0 || iy >= h as isize {
                                            continue;
                                        }
                                        let irow = ibase + iy as usize * w;
                                        let orow = obase + oy * ow;
                                        for ox in 0..ow {
                                            let ix = (ox * stride + kx) as isize - padding as isize;
                                            if ix < 0 || ix >= w as isize {
                                                continue;
                                            }
                                            let gv = g[orow + ox];
                                            wacc += gv * vi[irow + ix as usize];
                                            grads[ii][irow + ix as usize] += gv * wt;
                                        }
                                    }
                                    grads[wi][widx] += wacc;
                                }
                            }
                        }
                    }
                }
            })),
        )
    }

    /// 2x2 max pooling, stride 2. Gradient routes to the argmax; ties break
    /// to the first index in row-major order.
    pub fn maxpool2(&mut self, input: TensorId) -> TensorId {
        let s = self.shape(input).to_vec();
        assert_eq!(s.len(), 4, "maxpool2 input must be NCHW");
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "maxpool2 needs even spatial dims");
        let (oh, ow) = (h / 2, w / 2);
        let vi = self.val(input);
        let mut out = vec![0.0; n * c * oh * ow];
        let mut argmax = vec![0usize; n * c * oh * ow];
        for nc in 0..n * c {
            let ibase = nc * h * w;
            let obase = nc * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut besti = 0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let idx = ibase + (oy * 2 + dy) * w + ox * 2 + dx;
                            if vi[idx] > best {
                                best = vi[idx];
                                besti = idx;
                            }
                        }
                    }
                    out[obase + oy * ow + ox] = best;
                    argmax[obase + oy * ow + ox] = besti;
                }
            }
        }
        let ai = input.0;
        let argmax = Rc::new(argmax);
        self.push(
            out,
            vec![n, c, oh, ow],
            Some(Box::new(move |g, grads| {
                for (o, gi) in g.iter().enumerate() {
                    grads[ai][argmax[o]] += gi;
                }
            })),
        )
    }

    /// 2x2 average pooling, stride 2. Gradient spreads 1/4 to each cell.
    pub fn avgpool2(&mut self, input: TensorId) -> TensorId {
        let s = self.shape(input).to_vec();
        assert_eq!(s.len(), 4, "avgpool2 input must be NCHW");
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        assert!(h % 2 == 0 && w % 2 == 0, "avgpool2 needs even spatial dims");
        let (oh, ow) = (h / 2, w / 2);
        let vi = self.val(input);
        let mut out = vec![0.0; n * c * oh * ow];
        for nc in 0..n * c {
            let ibase = nc * h * w;
            let obase = nc * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            acc += vi[ibase + (oy * 2 + dy) * w + ox * 2 + dx];
                        }
                    }
                    out[obase + oy * ow + ox] = acc * 0.25;
                }
            }
        }
        let ai = input.0;
        self.push(
            out,
            vec![n, c, oh, ow],
            Some(Box::new(move |g, grads| {
                for nc in 0..n * c {
                    let ibase = nc * h * w;
                    let obase = nc * oh * ow;
                    for oy in 0..oh {
                        for ox in 0..ow {
                            let gv = g[obase + oy * ow + ox] * 0.25;
                            for dy in 0..2 {
                                for dx in 0..2 {
                                    grads[ai][ibase + (oy * 2 + dy) * w + ox * 2 + dx] += gv;
                                }
                            }
                        }
                    }
                }
            })),
        )
    }

    /// Spatial mean per (batch, channel): `[n, c, h, w]` -> `[n, c]`.
    pub fn global_avgpool(&mut self, input: TensorId) -> TensorId {
        let s = self.shape(input).to_vec();
        assert_eq!(s.len(), 4, "global_avgpool input must be NCHW");
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        let hw = (h * w) as f64;
        let vi = self.val(input);
        let mut out = vec![0.0; n * c];
        for nc in 0..n * c {
            out[nc] = vi[nc * h * w..(nc + 1) * h * w].iter().sum::<f64>() / hw;
        }
        let ai = input.0;
        self.push(
            out,
            vec![n, c],
            Some(Box::new(move |g, grads| {
                for nc in 0..n * c {
                    let gv = g[nc] / hw;
                    for gi in grads[ai][nc * h * w..(nc + 1) * h * w].iter_mut() {
                        *gi += gv;
                    }
                }
            })),
        )
    }

    /// Bilinear upsampling by an integer factor (align-corners = false
    /// coordinate mapping; the edge pair extrapolates linearly so the op is
    /// exact on linear ramps).
    pub fn bilinear_upsample(&mut self, input: TensorId, factor: usize) -> TensorId {
        assert!(factor >= 2);
        let s = self.shape(input).to_vec();
        assert_eq!(s.len(), 4, "bilinear_upsample input must be NCHW");
        let (n, c, h, w) = (s[0], s[1], s[2], s[3]);
        assert!(h >= 2 && w >= 2, "bilinear_upsample needs at least 2x2 input");
        let (oh, ow) = (h * factor, w * factor);
        let vi = self.val(input);
        // taps[(oy, ox)] -> (y0, x0, wy, wx); shared across n, c
        let mut ytap = Vec::with_capacity(oh);
        for oy in 0..oh {
            let sy = (oy as f64 + 0.5) / factor as f64 - 0.5;
            let y0 = (sy.floor() as isize).clamp(0, h as isize - 2) as usize;
            ytap.push((y0, sy - y0 as f64));
        }
        let mut xtap = Vec::with_capacity(ow);
        for ox in 0..ow {
            let sx = (ox as f64 + 0.5) / factor as f64 - 0.5;
            let x0 = (sx.floor() as isize).clamp(0, w as isize - 2) as usize;
            xtap.push((x0, sx - x0 as f64));
        }
        let mut out = vec![0.0; n * c * oh * ow];
        for nc in 0..n * c {
            let ibase = nc * h * w;
            let obase = nc * oh * ow;
            for oy in 0..oh {
                let (y0, wy) = ytap[oy];
                for ox in 0..ow {
                    let (x0, wx) = xtap[ox];
                    let v00 = vi[ibase + y0 * w + x0];
                    let v01 = vi[ibase + y0 * w + x0 + 1];
                    let v10 = vi[ibase + (y0 + 1) * w + x0];
                    let v11 = vi[ibase + (y0 + 1) * w + x0 + 1];
                    let top = v00 + (v01 - v00) * wx;
                    let bot = v10 + (v11 - v10) * wx;
                    out[obase + oy * ow + ox] = top + (bot - top) * wy;
                }
            }
        }
        let ai = input.0;
        let ytap = Rc::new(ytap);
        let xtap = Rc::new(xtap);
        self.push(
            out,
            vec![n, c, oh, ow],
            Some(Box::new(move |g, grads| {
                for nc in 0..n * c {
                    let ibase = nc * h * w;
                    let obase = nc * oh * ow;
                    for oy in 0..oh {
                        let (y0, wy) = ytap[oy];
                        for ox in 0..ow {
                            let (x0, wx) = xtap[ox];
                            let gv = g[obase + oy * ow + ox];
                            grads[ai][ibase + y0 * w + x0] += gv * (1.0 - wy) * (1.0 - wx);
                            grads[ai][ibase + y0 * w + x0 + 1] += gv * (1.0 - wy) * wx;
                            grads[ai][ibase + (y0 + 1) * w + x0] += gv * wy * (1.0 - wx);
                            grads[ai][ibase + (y0 + 1) * w + x0 + 1] += gv * wy * wx;
                        }
                    }
                }
            })),
        )
    }

    /// Standard scaled-dot-product multi-head self-attention over `[t, d]`
    /// tokens; `wq/wk/wv/wo` are `[d, d]` projections. With two tokens the
    /// 2x2 attention weights are the pairwise correlations the recoding
    /// step relies on.
    #[allow(clippy::too_many_arguments)]
    pub fn multihead_self_attention(
        &mut self,
        x: TensorId,
        heads: usize,
        wq: TensorId,
        wk: TensorId,
        wv: TensorId,
        wo: TensorId,
    ) -> TensorId {
        let d = self.shape(x)[1];
        assert!(d % heads == 0, "token dim {d} not divisible by {heads} heads");
        let dh = d / heads;
        let q = self.matmul(x, wq);
        let k = self.matmul(x, wk);
        let v = self.matmul(x, wv);
        let mut outs = Vec::with_capacity(heads);
        for hd in 0..heads {
            let qh = self.slice_cols(q, hd * dh, (hd + 1) * dh);
            let kh = self.slice_cols(k, hd * dh, (hd + 1) * dh);
            let vh = self.slice_cols(v, hd * dh, (hd + 1) * dh);
            let kt = self.transpose(kh);
            let scores = self.matmul(qh, kt);
            let scaled = self.scale(scores, 1.0 / (dh as f64).sqrt());
            let attn = self.softmax_rows(scaled);
            outs.push(self.matmul(attn, vh));
        }
        let cat = if outs.len() == 1 { outs[0] } else { self.concat_cols(&outs) };
        self.matmul(cat, wo)
    }
}

/// One forward/backward round over a parameter set: copies parameter
/// values onto the tape, remembers the binding, and pushes gradients back
/// after the reverse sweep (frozen parameters accumulate nothing).
#[derive(Default)]
pub struct Session {
    pub tape: Tape,
    // tensor, index into its source set, and the parameter name; the name
    // disambiguates when a graph touches several parameter sets
    bindings: Vec<(TensorId, usize, String)>,
}

impl Session {
    pub fn new() -> Self {
        Session::default()
    }

    pub fn param(&mut self, params: &ParamSet, idx: usize) -> TensorId {
        let p = params.get(idx);
        let id = self.tape.leaf(p.value.clone(), p.shape.clone());
        self.bindings.push((id, idx, p.name.clone()));
        id
    }

    /// Accumulate gradients of `loss` into the parameters of `params`.
    /// Bindings whose name is not found in `params` are skipped, so a loss
    /// built from several parameter sets can be backpropagated into each
    /// set with separate calls.
    pub fn backward(&mut self, loss: TensorId, params: &mut ParamSet) {
        let grads = self.tape.backward(loss);
        self.apply(&grads, params);
    }

    fn apply(&self, grads: &Grads, params: &mut ParamSet) {
        for (id, idx, name) in &self.bindings {
            let direct = *idx < params.len() && params.get(*idx).name == *name;
            let p = if direct {
                params.get_mut(*idx)
            } else {
                match params.by_name_mut(name) {
                    Some(p) => p,
                    None => continue,
                }
            };
            if p.frozen {
                continue;
            }
            for (g, src) in p.grad.iter_mut().zip(grads.of(*id)) {
                *g += src;
            }
        }
    }

    /// [`Self::backward`] into two parameter sets from one reverse sweep.
    pub fn backward_multi(&mut self, loss: TensorId, sets: &mut [&mut ParamSet]) {
        let grads = self.tape.backward(loss);
        for params in sets.iter_mut() {
            self.apply(&grads, params);
        }
    }
}
