//! Reverse-mode differentiation over a tape of tensor operations.
//!
//! A [`Graph`] borrows the parameters, records each operation with the
//! values its backward pass needs, and pushes gradients straight into a
//! parameter-shaped buffer.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use super::Scalar;

pub const LN_EPS: f64 = 1e-12;

/// Named parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.tensors.iter().map(|t| Tensor::zeros(t.rows, t.cols)).collect()
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Param(usize),
    Const,
    Gather { table: Var, ids: Vec<u32> },
    Add(Var, Var),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Gelu(Var),
    LayerNorm { x: Var, g: Var, b: Var, xhat: Vec<T>, rstd: Vec<T> },
    Attention { q: Var, k: Var, v: Var, heads: usize, probs: Vec<T> },
    Rows(Var, Vec<usize>),
    MeanRows(Var, Vec<usize>),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Vec<T> },
    Bce { logits: Var, targets: Vec<T> },
    Cosine { a: Var, b: Var },
    SquaredError { x: Var, target: T },
    Scale(Var, T),
}

struct Node<T> {
    op: Op<T>,
    value: Option<Tensor<T>>,
}

pub struct Graph<'a, T> {
    store: &'a ParamStore<T>,
    nodes: Vec<Node<T>>,
}

fn softmax_in_place<T: Scalar>(xs: &mut [T]) {
    let m = xs.iter().copied().fold(xs[0], T::max);
    let mut sum = T::ZERO;
    for x in xs.iter_mut() {
        *x = (*x - m).exp();
        sum += *x;
    }
    for x in xs.iter_mut() {
        *x = *x / sum;
    }
}

fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::ZERO {
        T::ONE / (T::ONE + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::ONE + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus<T: Scalar>(x: T) -> T {
    if x > T::ZERO {
        x + (T::ONE + (-x).exp()).ln()
    } else {
        (T::ONE + x.exp()).ln()
    }
}

const INV_SQRT2: f64 = core::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

impl<'a, T: Scalar> Graph<'a, T> {
    pub fn new(store: &'a ParamStore<T>) -> Self {
        Graph { store, nodes: Vec::new() }
    }

    fn push(&mut self, op: Op<T>, value: Option<Tensor<T>>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(id), _) => &self.store.tensors[*id],
            (_, Some(t)) => t,
            _ => unreachable!("node without value"),
        }
    }

    pub fn scalar(&self, v: Var) -> T {
        self.value(v).data[0]
    }

    pub fn param(&mut self, id: usize) -> Var {
        self.push(Op::Param(id), None)
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(Op::Const, Some(t))
    }

    pub fn gather(&mut self, table: Var, ids: &[u32]) -> Var {
        let t = self.value(table);
        let mut out = Tensor::zeros(ids.len(), t.cols);
        for (r, id) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(*id as usize));
        }
        self.push(Op::Gather { table, ids: ids.to_vec() }, Some(out))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), Some(out))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, w) = (self.value(a), self.value(b));
        assert_eq!(x.cols, w.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(x.rows, w.cols);
        matmul_acc(&x.data, &w.data, &mut out.data, x.rows, x.cols, w.cols);
        self.push(Op::MatMul(a, b), Some(out))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let mut out = self.value(a).clone();
        let b = self.value(bias);
        assert_eq!(b.len(), out.cols, "bias shape mismatch");
        for r in 0..out.rows {
            for (o, v) in out.row_mut(r).iter_mut().zip(&b.data) {
                *o += *v;
            }
        }
        self.push(Op::AddRow(a, bias), Some(out))
    }

    /// `x @ w + b`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_row(y, b)
    }

    /// Exact (erf) GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        let half = T::from_f64(0.5);
        let k = T::from_f64(INV_SQRT2);
        for x in &mut out.data {
            *x = half * *x * (T::ONE + (*x * k).erf());
        }
        self.push(Op::Gelu(a), Some(out))
    }

    /// Row-wise layer normalization with gain and bias.
    pub fn layer_norm(&mut self, x: Var, g: Var, b: Var) -> Var {
        let xv = self.value(x);
        let (n, h) = xv.shape();
        let (gv, bv) = (self.value(g), self.value(b));
        let mut out = Tensor::zeros(n, h);
        let mut xhat = vec![T::ZERO; n * h];
        let mut rstd = vec![T::ZERO; n];
        let hn = T::from_f64(h as f64);
        for r in 0..n {
            let row = xv.row(r);
            let mut mean = T::ZERO;
            for v in row {
                mean += *v;
            }
            mean = mean / hn;
            let mut var = T::ZERO;
            for v in row {
                let d = *v - mean;
                var += d * d;
            }
            var = var / hn;
            let rs = T::ONE / (var + T::from_f64(LN_EPS)).sqrt();
            rstd[r] = rs;
            for c in 0..h {
                let xh = (row[c] - mean) * rs;
                xhat[r * h + c] = xh;
                out.data[r * h + c] = xh * gv.data[c] + bv.data[c];
            }
        }
        self.push(Op::LayerNorm { x, g, b, xhat, rstd }, Some(out))
    }

    /// Multi-head scaled dot-product attention. Keys with `keep[j] == false`
    /// get zero weight.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, heads: usize, keep: &[bool]) -> Var {
        let (qv, kv, vv) = (self.value(q), self.value(k), self.value(v));
        let (n, h) = qv.shape();
        let d = h / heads;
        let scale = T::ONE / T::from_f64(d as f64).sqrt();
        let mut probs = vec![T::ZERO; heads * n * n];
        let mut out = Tensor::zeros(n, h);
        let kept: Vec<usize> = (0..n).filter(|j| keep[*j]).collect();
        let mut row = vec![T::ZERO; kept.len()];
        for hd in 0..heads {
            let off = hd * d;
            for i in 0..n {
                if kept.is_empty() {
                    continue;
                }
                let qi = &qv.data[i * h + off..i * h + off + d];
                for (slot, &j) in kept.iter().enumerate() {
                    let kj = &kv.data[j * h + off..j * h + off + d];
                    let mut s = T::ZERO;
                    for t in 0..d {
                        s += qi[t] * kj[t];
                    }
                    row[slot] = s * scale;
                }
                softmax_in_place(&mut row);
                let p = &mut probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                for (slot, &j) in kept.iter().enumerate() {
                    p[j] = row[slot];
                    let vj = &vv.data[j * h + off..j * h + off + d];
                    let o = &mut out.data[i * h + off..i * h + off + d];
                    for t in 0..d {
                        o[t] += row[slot] * vj[t];
                    }
                }
            }
        }
        self.push(Op::Attention { q, k, v, heads, probs }, Some(out))
    }

    pub fn rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(idx.len(), t.cols);
        for (r, i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(*i));
        }
        self.push(Op::Rows(a, idx.to_vec()), Some(out))
    }

    /// Mean of the listed rows, as a `[1, cols]` tensor.
    pub fn mean_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(1, t.cols);
        let inv = T::ONE / T::from_f64(idx.len().max(1) as f64);
        for i in idx {
            for (o, v) in out.data.iter_mut().zip(t.row(*i)) {
                *o += *v * inv;
            }
        }
        self.push(Op::MeanRows(a, idx.to_vec()), Some(out))
    }

    /// Mean softmax cross entropy of each row against its target class.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.rows, targets.len(), "one target per row");
        let mut probs = l.data.clone();
        let mut loss = T::ZERO;
        for (r, t) in targets.iter().enumerate() {
            let row = &mut probs[r * l.cols..(r + 1) * l.cols];
            softmax_in_place(row);
            let lr = l.row(r);
            let m = lr.iter().copied().fold(lr[0], T::max);
            let mut s = T::ZERO;
            for v in lr {
                s += (*v - m).exp();
            }
            loss += m + s.ln() - lr[*t];
        }
        loss = loss / T::from_f64(targets.len().max(1) as f64);
        self.push(Op::CrossEntropy { logits, targets: targets.to_vec(), probs }, Some(Tensor::scalar(loss)))
    }

    /// Mean binary cross entropy of `[n, 1]` logits against 0/1 targets.
    pub fn bce(&mut self, logits: Var, targets: &[T]) -> Var {
        let l = self.value(logits);
        assert_eq!(l.len(), targets.len(), "one target per logit");
        let mut loss = T::ZERO;
        for (x, y) in l.data.iter().zip(targets) {
            loss += softplus(*x) - *y * *x;
        }
        loss = loss / T::from_f64(targets.len().max(1) as f64);
        self.push(Op::Bce { logits, targets: targets.to_vec() }, Some(Tensor::scalar(loss)))
    }

    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let c = cosine(&self.value(a).data, &self.value(b).data);
        self.push(Op::Cosine { a, b }, Some(Tensor::scalar(c)))
    }

    /// `(x - target)²` for a scalar `x`.
    pub fn squared_error(&mut self, x: Var, target: T) -> Var {
        let d = self.scalar(x) - target;
        self.push(Op::SquaredError { x, target }, Some(Tensor::scalar(d * d)))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Var {
        let mut out = self.value(a).clone();
        out.scale(s);
        self.push(Op::Scale(a, s), Some(out))
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], params: &mut [Tensor<T>], v: Var, g: Tensor<T>) {
        match &self.nodes[v.0].op {
            Op::Param(id) => params[*id].add_assign(&g),
            Op::Const => {}
            _ => match &mut grads[v.0] {
                Some(t) => t.add_assign(&g),
                slot => *slot = Some(g),
            },
        }
    }

    /// Adds `seed · d(root)/d(param)` into `params` for every parameter.
    pub fn backward(&self, root: Var, seed: T, params: &mut [Tensor<T>]) {
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut g0 = Tensor::zeros(self.value(root).rows, self.value(root).cols);
        g0.fill(seed);
        self.accumulate(&mut grads, params, root, g0);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Param(_) | Op::Const => {}
                Op::Gather { table, ids } => {
                    if let Op::Param(id) = self.nodes[table.0].op {
                        let p = &mut params[id];
                        for (r, tok) in ids.iter().enumerate() {
                            for (o, v) in p.row_mut(*tok as usize).iter_mut().zip(g.row(r)) {
                                *o += *v;
                            }
                        }
                    } else {
                        let t = self.value(*table);
                        let mut gt = Tensor::zeros(t.rows, t.cols);
                        for (r, tok) in ids.iter().enumerate() {
                            for (o, v) in gt.row_mut(*tok as usize).iter_mut().zip(g.row(r)) {
                                *o += *v;
                            }
                        }
                        self.accumulate(&mut grads, params, *table, gt);
                    }
                }
                Op::Add(a, b) => {
                    self.accumulate(&mut grads, params, *a, g.clone());
                    self.accumulate(&mut grads, params, *b, g);
                }
                Op::MatMul(a, b) => {
                    let (x, w) = (self.value(*a), self.value(*b));
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    matmul_bt_acc(&g.data, &w.data, &mut ga.data, x.rows, w.cols, w.rows);
                    let mut gb = Tensor::zeros(w.rows, w.cols);
                    matmul_at_acc(&x.data, &g.data, &mut gb.data, x.rows, x.cols, w.cols);
                    self.accumulate(&mut grads, params, *a, ga);
                    self.accumulate(&mut grads, params, *b, gb);
                }
                Op::AddRow(a, bias) => {
                    let b = self.value(*bias);
                    let mut gb = Tensor::zeros(b.rows, b.cols);
                    for r in 0..g.rows {
                        for (o, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *o += *v;
                        }
                    }
                    self.accumulate(&mut grads, params, *a, g);
                    self.accumulate(&mut grads, params, *bias, gb);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let mut ga = g;
                    let half = T::from_f64(0.5);
                    let k = T::from_f64(INV_SQRT2);
                    let c = T::from_f64(INV_SQRT_2PI);
                    for (gv, xv) in ga.data.iter_mut().zip(&x.data) {
                        let cdf = half * (T::ONE + (*xv * k).erf());
                        let pdf = c * (-half * *xv * *xv).exp();
                        *gv *= cdf + *xv * pdf;
                    }
                    self.accumulate(&mut grads, params, *a, ga);
                }
                Op::LayerNorm { x, g: gain, b, xhat, rstd } => {
                    let gv = self.value(*gain);
                    let (n, h) = g.shape();
                    let mut gx = Tensor::zeros(n, h);
                    let mut gg = Tensor::zeros(gv.rows, gv.cols);
                    let mut gbias = Tensor::zeros(gv.rows, gv.cols);
                    let hn = T::from_f64(h as f64);
                    for r in 0..n {
                        let gr = g.row(r);
                        let xh = &xhat[r * h..(r + 1) * h];
                        let mut s1 = T::ZERO;
                        let mut s2 = T::ZERO;
                        for c in 0..h {
                            gg.data[c] += gr[c] * xh[c];
                            gbias.data[c] += gr[c];
                            let dxh = gr[c] * gv.data[c];
                            s1 += dxh;
                            s2 += dxh * xh[c];
                        }
                        for c in 0..h {
                            let dxh = gr[c] * gv.data[c];
                            gx.data[r * h + c] = rstd[r] * (dxh - s1 / hn - xh[c] * s2 / hn);
                        }
                    }
                    self.accumulate(&mut grads, params, *x, gx);
                    self.accumulate(&mut grads, params, *gain, gg);
                    self.accumulate(&mut grads, params, *b, gbias);
                }
                Op::Attention { q, k, v, heads, probs } => {
                    let (qv, kv, vv) = (self.value(*q), self.value(*k), self.value(*v));
                    let (n, h) = qv.shape();
                    let d = h / heads;
                    let scale = T::ONE / T::from_f64(d as f64).sqrt();
                    let mut gq = Tensor::zeros(n, h);
                    let mut gk = Tensor::zeros(n, h);
                    let mut gvv = Tensor::zeros(n, h);
                    let mut dp = vec![T::ZERO; n];
                    for hd in 0..*heads {
                        let off = hd * d;
                        for i in 0..n {
                            let p = &probs[(hd * n + i) * n..(hd * n + i + 1) * n];
                            let go = &g.data[i * h + off..i * h + off + d];
                            let mut dot = T::ZERO;
                            for j in 0..n {
                                if p[j] == T::ZERO {
                                    dp[j] = T::ZERO;
                                    continue;
                                }
                                let vj = &vv.data[j * h + off..j * h + off + d];
                                let mut s = T::ZERO;
                                for t in 0..d {
                                    s += go[t] * vj[t];
                                    gvv.data[j * h + off + t] += p[j] * go[t];
                                }
                                dp[j] = s;
                                dot += p[j] * s;
                            }
                            for j in 0..n {
                                if p[j] == T::ZERO {
                                    continue;
                                }
                                let ds = p[j] * (dp[j] - dot) * scale;
                                for t in 0..d {
                                    gq.data[i * h + off + t] += ds * kv.data[j * h + off + t];
                                    gk.data[j * h + off + t] += ds * qv.data[i * h + off + t];
                                }
                            }
                        }
                    }
                    self.accumulate(&mut grads, params, *q, gq);
                    self.accumulate(&mut grads, params, *k, gk);
                    self.accumulate(&mut grads, params, *v, gvv);
                }
                Op::Rows(a, idx) => {
                    let t = self.value(*a);
                    let mut ga = Tensor::zeros(t.rows, t.cols);
                    for (r, i) in idx.iter().enumerate() {
                        for (o, v) in ga.row_mut(*i).iter_mut().zip(g.row(r)) {
                            *o += *v;
                        }
                    }
                    self.accumulate(&mut grads, params, *a, ga);
                }
                Op::MeanRows(a, idx) => {
                    let t = self.value(*a);
                    let mut ga = Tensor::zeros(t.rows, t.cols);
                    let inv = T::ONE / T::from_f64(idx.len().max(1) as f64);
                    for i in idx {
                        for (o, v) in ga.row_mut(*i).iter_mut().zip(&g.data) {
                            *o += *v * inv;
                        }
                    }
                    self.accumulate(&mut grads, params, *a, ga);
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let l = self.value(*logits);
                    let s = g.data[0] / T::from_f64(targets.len().max(1) as f64);
                    let mut gl = Tensor::from_vec(l.rows, l.cols, probs.clone());
                    for (r, t) in targets.iter().enumerate() {
                        gl.data[r * l.cols + t] -= T::ONE;
                    }
                    gl.scale(s);
                    self.accumulate(&mut grads, params, *logits, gl);
                }
                Op::Bce { logits, targets } => {
                    let l = self.value(*logits);
                    let s = g.data[0] / T::from_f64(targets.len().max(1) as f64);
                    let mut gl = Tensor::zeros(l.rows, l.cols);
                    for ((o, x), y) in gl.data.iter_mut().zip(&l.data).zip(targets) {
                        *o = (sigmoid(*x) - *y) * s;
                    }
                    self.accumulate(&mut grads, params, *logits, gl);
                }
                Op::Cosine { a, b } => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let (ga, gb) = cosine_grad(&av.data, &bv.data);
                    let s = g.data[0];
                    let mk = |v: Vec<T>, t: &Tensor<T>| {
                        let mut out = Tensor::from_vec(t.rows, t.cols, v);
                        out.scale(s);
                        out
                    };
                    let (ta, tb) = (mk(ga, av), mk(gb, bv));
                    self.accumulate(&mut grads, params, *a, ta);
                    self.accumulate(&mut grads, params, *b, tb);
                }
                Op::SquaredError { x, target } => {
                    let d = self.scalar(*x) - *target;
                    let two = T::from_f64(2.0);
                    self.accumulate(&mut grads, params, *x, Tensor::scalar(two * d * g.data[0]));
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale(*s);
                    self.accumulate(&mut grads, params, *a, ga);
                }
            }
        }
    }
}

const NORM_FLOOR: f64 = 1e-12;

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let (mut ab, mut aa, mut bb) = (T::ZERO, T::ZERO, T::ZERO);
    for (x, y) in a.iter().zip(b) {
        ab += *x * *y;
        aa += *x * *x;
        bb += *y * *y;
    }
    let floor = T::from_f64(NORM_FLOOR);
    ab / (aa.sqrt().max(floor) * bb.sqrt().max(floor))
}

fn cosine_grad<T: Scalar>(a: &[T], b: &[T]) -> (Vec<T>, Vec<T>) {
    let (mut ab, mut aa, mut bb) = (T::ZERO, T::ZERO, T::ZERO);
    for (x, y) in a.iter().zip(b) {
        ab += *x * *y;
        aa += *x * *x;
        bb += *y * *y;
    }
    let floor = T::from_f64(NORM_FLOOR);
    let (na, nb) = (aa.sqrt().max(floor), bb.sqrt().max(floor));
    let c = ab / (na * nb);
    let ga = a.iter().zip(b).map(|(x, y)| *y / (na * nb) - c * *x / (na * na)).collect();
    let gb = a.iter().zip(b).map(|(x, y)| *x / (na * nb) - c * *y / (nb * nb)).collect();
    (ga, gb)
}
