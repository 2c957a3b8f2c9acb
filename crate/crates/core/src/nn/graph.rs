use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use super::{NnError, ParamId, ParamStore, Tensor};
use crate::math;

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(usize, usize),
    AddRow(usize, usize),
    MulRow(usize, usize),
    BroadcastRows(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Tanh(usize),
    Exp(usize),
    Square(usize),
    Clamp(usize, f64, f64),
    Min(usize, usize),
    Max(usize, usize),
    Sum(usize),
    Mean(usize),
    SumCols(usize),
    Attention(Box<AttentionCache>),
    MaskedMeanPool {
        x: usize,
        tokens: usize,
        mask: Vec<bool>,
        counts: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct AttentionCache {
    q: usize,
    k: usize,
    v: usize,
    batch: usize,
    tokens: usize,
    heads: usize,
    mask: Vec<bool>,
    /// `[batch, heads, tokens, tokens]` softmax weights.
    probs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Reverse-mode tape.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    consumed: bool,
    non_finite: Option<&'static str>,
}

/// Result of [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(ParamId, usize)>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if the loss depends on it.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(Option::as_ref)
    }

    /// Gradients aligned with `store`; parameters the loss does not touch get zeros.
    pub fn for_store(&self, store: &ParamStore) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        for &(id, node) in &self.params {
            if let Some(g) = &self.nodes[node] {
                for (o, v) in out[id.0].data_mut().iter_mut().zip(g.data()) {
                    *o += v;
                }
            }
        }
        out
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    let data = t.data().iter().map(|&v| f(v)).collect();
    Tensor::new(t.shape().to_vec(), data).expect("same length")
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("same length")
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor, name: &'static str) -> Var {
        if cfg!(debug_assertions) && self.non_finite.is_none() && !value.all_finite() {
            self.non_finite = Some(name);
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// First operation that produced NaN/Inf, tracked in debug builds.
    pub fn check_finite(&self) -> Result<(), NnError> {
        match self.non_finite {
            Some(op) => Err(NnError::NonFinite { op }),
            None => Ok(()),
        }
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(Op::Leaf, t, "input")
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(Op::Param(id), store.get(id).clone(), "param")
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let ((m, k), (k2, n)) = match (ta.dims2(), tb.dims2()) {
            (Some(x), Some(y)) if x.1 == y.0 => (x, y),
            _ => return Err(mismatch("matmul", ta, tb)),
        };
        debug_assert_eq!(k, k2);
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for kk in 0..k {
                let aik = ad[i * k + kk];
                if aik == 0.0 {
                    continue;
                }
                let brow = &bd[kk * n..(kk + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += aik * bv;
                }
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a.0, b.0), value, "matmul"))
    }

    fn check_row(&self, op: &'static str, x: Var, r: Var) -> Result<(usize, usize), NnError> {
        let (tx, tr) = (self.value(x), self.value(r));
        match (tx.dims2(), tr.shape()) {
            (Some((b, n)), [m]) if *m == n => Ok((b, n)),
            _ => Err(mismatch(op, tx, tr)),
        }
    }

    /// `x[B, n] + row[n]` broadcast over the batch.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, NnError> {
        let (_, n) = self.check_row("add_row", x, row)?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(x).clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v += r[i % n];
        }
        Ok(self.push(Op::AddRow(x.0, row.0), value, "add_row"))
    }

    /// `x[B, n] * row[n]` broadcast over the batch.
    pub fn mul_row(&mut self, x: Var, row: Var) -> Result<Var, NnError> {
        let (_, n) = self.check_row("mul_row", x, row)?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(x).clone();
        for (i, v) in value.data_mut().iter_mut().enumerate() {
            *v *= r[i % n];
        }
        Ok(self.push(Op::MulRow(x.0, row.0), value, "mul_row"))
    }

    /// Repeats a vector `[n]` into `[rows, n]`.
    pub fn broadcast_rows(&mut self, v: Var, rows: usize) -> Result<Var, NnError> {
        let t = self.value(v);
        if t.rank() != 1 {
            return Err(mismatch("broadcast_rows", t, t));
        }
        let n = t.len();
        let data: Vec<f64> = (0..rows).flat_map(|_| t.data().iter().copied()).collect();
        let value = Tensor::matrix(rows, n, data)?;
        Ok(self.push(Op::BroadcastRows(v.0), value, "broadcast_rows"))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), NnError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            Ok(())
        } else {
            Err(mismatch(op, ta, tb))
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("add", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a.0, b.0), value, "add"))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("sub", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a.0, b.0), value, "sub"))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("mul", a, b)?;
        let value = zip(self.value(a), self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a.0, b.0), value, "mul"))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("minimum", a, b)?;
        let value = zip(self.value(a), self.value(b), f64::min);
        Ok(self.push(Op::Min(a.0, b.0), value, "minimum"))
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.same_shape("maximum", a, b)?;
        let value = zip(self.value(a), self.value(b), f64::max);
        Ok(self.push(Op::Max(a.0, b.0), value, "maximum"))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = map(self.value(a), |x| x * k);
        self.push(Op::Scale(a.0, k), value, "scale")
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let value = map(self.value(a), |x| x + c);
        self.push(Op::AddScalar(a.0), value, "add_scalar")
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = map(self.value(a), math::tanh);
        self.push(Op::Tanh(a.0), value, "tanh")
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = map(self.value(a), math::exp);
        self.push(Op::Exp(a.0), value, "exp")
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = map(self.value(a), |x| x * x);
        self.push(Op::Square(a.0), value, "square")
    }

    /// Clamp to `[lo, hi]`; the gradient passes only where the input lies inside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = map(self.value(a), |x| x.clamp(lo, hi));
        self.push(Op::Clamp(a.0, lo, hi), value, "clamp")
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a.0), value, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let value = Tensor::scalar(t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Op::Mean(a.0), value, "mean")
    }

    /// Row sums of a matrix: `[B, n] -> [B]`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var, NnError> {
        let t = self.value(a);
        let (b, n) = t.dims2().ok_or_else(|| mismatch("sum_cols", t, t))?;
        let data = (0..b).map(|i| t.data()[i * n..(i + 1) * n].iter().sum()).collect();
        let value = Tensor::vector(data);
        Ok(self.push(Op::SumCols(a.0), value, "sum_cols"))
    }

    /// Multi-head scaled dot-product self-attention.
    ///
    /// `q`, `k`, `v` are `[batch * tokens, d]` with `d` divisible by `heads`; `mask` has one flag
    /// per token and masked keys receive exactly zero weight. Every batch row needs at least one
    /// valid token.
    #[allow(clippy::too_many_arguments)]
    pub fn attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        batch: usize,
        tokens: usize,
        heads: usize,
        mask: &[bool],
    ) -> Result<Var, NnError> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        if tq.shape() != tk.shape() {
            return Err(mismatch("attention", tq, tk));
        }
        if tq.shape() != tv.shape() {
            return Err(mismatch("attention", tq, tv));
        }
        let (rows, d) = tq.dims2().ok_or_else(|| mismatch("attention", tq, tk))?;
        if rows != batch * tokens || mask.len() != rows {
            return Err(NnError::ShapeMismatch {
                op: "attention",
                left: tq.shape().to_vec(),
                right: vec![batch, tokens, mask.len()],
            });
        }
        if heads == 0 || d % heads != 0 {
            return Err(NnError::Spec("embedding width must be divisible by the head count"));
        }
        for b in 0..batch {
            if !mask[b * tokens..(b + 1) * tokens].iter().any(|&m| m) {
                return Err(NnError::AllMasked { row: b });
            }
        }
        let dk = d / heads;
        let inv_scale = 1.0 / math::sqrt(dk as f64);
        let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
        let mut probs = vec![0.0; batch * heads * tokens * tokens];
        let mut out = vec![0.0; rows * d];
        let mut logits = vec![0.0; tokens];
        for b in 0..batch {
            for h in 0..heads {
                let off = h * dk;
                for i in 0..tokens {
                    let qi = &qd[(b * tokens + i) * d + off..][..dk];
                    let mut max = f64::NEG_INFINITY;
                    for j in 0..tokens {
                        if mask[b * tokens + j] {
                            let kj = &kd[(b * tokens + j) * d + off..][..dk];
                            let s = qi.iter().zip(kj).map(|(x, y)| x * y).sum::<f64>() * inv_scale;
                            logits[j] = s;
                            max = max.max(s);
                        }
                    }
                    let p = &mut probs[((b * heads + h) * tokens + i) * tokens..][..tokens];
                    let mut z = 0.0;
                    for j in 0..tokens {
                        if mask[b * tokens + j] {
                            p[j] = math::exp(logits[j] - max);
                            z += p[j];
                        }
                    }
                    let o = &mut out[(b * tokens + i) * d + off..][..dk];
                    for j in 0..tokens {
                        if mask[b * tokens + j] {
                            p[j] /= z;
                            let vj = &vd[(b * tokens + j) * d + off..][..dk];
                            for (oc, vc) in o.iter_mut().zip(vj) {
                                *oc += p[j] * vc;
                            }
                        }
                    }
                }
            }
        }
        let value = Tensor::matrix(rows, d, out)?;
        let cache = AttentionCache {
            q: q.0,
            k: k.0,
            v: v.0,
            batch,
            tokens,
            heads,
            mask: mask.to_vec(),
            probs,
        };
        Ok(self.push(Op::Attention(Box::new(cache)), value, "attention"))
    }

    /// Softmax weights of an attention node, `[batch, heads, tokens, tokens]`.
    pub fn attention_weights(&self, v: Var) -> Option<&[f64]> {
        match &self.nodes[v.0].op {
            Op::Attention(c) => Some(&c.probs),
            _ => None,
        }
    }

    /// Softmax weights of the most recently recorded attention node.
    pub fn last_attention_weights(&self) -> Option<&[f64]> {
        self.nodes.iter().rev().find_map(|n| match &n.op {
            Op::Attention(c) => Some(&c.probs[..]),
            _ => None,
        })
    }

    /// Mean over valid tokens: `[batch * tokens, d] -> [batch, d]`.
    pub fn masked_mean_pool(&mut self, x: Var, batch: usize, tokens: usize, mask: &[bool]) -> Result<Var, NnError> {
        let t = self.value(x);
        let (rows, d) = t.dims2().ok_or_else(|| mismatch("masked_mean_pool", t, t))?;
        if rows != batch * tokens || mask.len() != rows {
            return Err(NnError::ShapeMismatch {
                op: "masked_mean_pool",
                left: t.shape().to_vec(),
                right: vec![batch, tokens, mask.len()],
            });
        }
        let mut counts = vec![0usize; batch];
        let mut out = vec![0.0; batch * d];
        for b in 0..batch {
            let o = &mut out[b * d..(b + 1) * d];
            for i in 0..tokens {
                if mask[b * tokens + i] {
                    counts[b] += 1;
                    for (oc, xc) in o.iter_mut().zip(&t.data()[(b * tokens + i) * d..][..d]) {
                        *oc += xc;
                    }
                }
            }
            if counts[b] == 0 {
                return Err(NnError::AllMasked { row: b });
            }
            let inv = 1.0 / counts[b] as f64;
            o.iter_mut().for_each(|v| *v *= inv);
        }
        let value = Tensor::matrix(batch, d, out)?;
        let op = Op::MaskedMeanPool {
            x: x.0,
            tokens,
            mask: mask.to_vec(),
            counts,
        };
        Ok(self.push(op, value, "masked_mean_pool"))
    }

    /// Reverse pass from a scalar `loss`. A graph supports exactly one backward pass.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients, NnError> {
        if self.consumed {
            return Err(NnError::BackwardTwice);
        }
        let loss_shape = self.value(loss).shape().to_vec();
        if self.value(loss).len() != 1 || loss_shape.len() > 1 {
            return Err(NnError::NonScalarLoss { shape: loss_shape });
        }
        self.check_finite()?;
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::full(&loss_shape, 1.0));
        let mut params = Vec::new();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let gd = g.data();
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => params.push((*id, idx)),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let (m, k) = ta.dims2().unwrap();
                    let n = tb.dims2().unwrap().1;
                    let (ad, bd) = (ta.data(), tb.data());
                    let ga = acc(&mut grads, *a, ta.shape());
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let brow = &bd[kk * n..(kk + 1) * n];
                            ga[i * k + kk] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                        }
                    }
                    let gb = acc(&mut grads, *b, tb.shape());
                    for i in 0..m {
                        let grow = &gd[i * n..(i + 1) * n];
                        for kk in 0..k {
                            let aik = ad[i * k + kk];
                            if aik == 0.0 {
                                continue;
                            }
                            for (o, gv) in gb[kk * n..(kk + 1) * n].iter_mut().zip(grow) {
                                *o += aik * gv;
                            }
                        }
                    }
                }
                Op::AddRow(x, r) => {
                    add_into(acc(&mut grads, *x, g.shape()), gd);
                    let n = self.nodes[*r].value.len();
                    let gr = acc(&mut grads, *r, &[n]);
                    for (i, v) in gd.iter().enumerate() {
                        gr[i % n] += v;
                    }
                }
                Op::MulRow(x, r) => {
                    let (tx, tr) = (&self.nodes[*x].value, &self.nodes[*r].value);
                    let n = tr.len();
                    let gx = acc(&mut grads, *x, tx.shape());
                    for (i, v) in gd.iter().enumerate() {
                        gx[i] += v * tr.data()[i % n];
                    }
                    let gr = acc(&mut grads, *r, &[n]);
                    for (i, v) in gd.iter().enumerate() {
                        gr[i % n] += v * tx.data()[i];
                    }
                }
                Op::BroadcastRows(v) => {
                    let n = self.nodes[*v].value.len();
                    let gv = acc(&mut grads, *v, &[n]);
                    for (i, x) in gd.iter().enumerate() {
                        gv[i % n] += x;
                    }
                }
                Op::Add(a, b) => {
                    add_into(acc(&mut grads, *a, g.shape()), gd);
                    add_into(acc(&mut grads, *b, g.shape()), gd);
                }
                Op::Sub(a, b) => {
                    add_into(acc(&mut grads, *a, g.shape()), gd);
                    let gb = acc(&mut grads, *b, g.shape());
                    for (o, v) in gb.iter_mut().zip(gd) {
                        *o -= v;
                    }
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let ga = acc(&mut grads, *a, g.shape());
                    for ((o, v), y) in ga.iter_mut().zip(gd).zip(tb.data()) {
                        *o += v * y;
                    }
                    let gb = acc(&mut grads, *b, g.shape());
                    for ((o, v), x) in gb.iter_mut().zip(gd).zip(ta.data()) {
                        *o += v * x;
                    }
                }
                Op::Min(a, b) | Op::Max(a, b) => {
                    let is_min = matches!(node.op, Op::Min(..));
                    let (ta, tb) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    let pick_a: Vec<bool> = ta
                        .data()
                        .iter()
                        .zip(tb.data())
                        .map(|(x, y)| if is_min { x <= y } else { x >= y })
                        .collect();
                    let ga = acc(&mut grads, *a, g.shape());
                    for ((o, v), &p) in ga.iter_mut().zip(gd).zip(&pick_a) {
                        if p {
                            *o += v;
                        }
                    }
                    let gb = acc(&mut grads, *b, g.shape());
                    for ((o, v), &p) in gb.iter_mut().zip(gd).zip(&pick_a) {
                        if !p {
                            *o += v;
                        }
                    }
                }
                Op::Scale(a, k) => {
                    for (o, v) in acc(&mut grads, *a, g.shape()).iter_mut().zip(gd) {
                        *o += v * k;
                    }
                }
                Op::AddScalar(a) => add_into(acc(&mut grads, *a, g.shape()), gd),
                Op::Tanh(a) => {
                    let y = node.value.data();
                    for ((o, v), y) in acc(&mut grads, *a, g.shape()).iter_mut().zip(gd).zip(y) {
                        *o += v * (1.0 - y * y);
                    }
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    for ((o, v), y) in acc(&mut grads, *a, g.shape()).iter_mut().zip(gd).zip(y) {
                        *o += v * y;
                    }
                }
                Op::Square(a) => {
                    let x = self.nodes[*a].value.data();
                    for ((o, v), x) in acc(&mut grads, *a, g.shape()).iter_mut().zip(gd).zip(x) {
                        *o += 2.0 * x * v;
                    }
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.nodes[*a].value.data();
                    for ((o, v), x) in acc(&mut grads, *a, g.shape()).iter_mut().zip(gd).zip(x) {
                        if *x >= *lo && *x <= *hi {
                            *o += v;
                        }
                    }
                }
                Op::Sum(a) | Op::Mean(a) => {
                    let shape = self.nodes[*a].value.shape().to_vec();
                    let n = self.nodes[*a].value.len();
                    let k = if matches!(node.op, Op::Mean(_)) {
                        gd[0] / n as f64
                    } else {
                        gd[0]
                    };
                    acc(&mut grads, *a, &shape).iter_mut().for_each(|o| *o += k);
                }
                Op::SumCols(a) => {
                    let shape = self.nodes[*a].value.shape().to_vec();
                    let n = shape[1];
                    for (i, o) in acc(&mut grads, *a, &shape).iter_mut().enumerate() {
                        *o += gd[i / n];
                    }
                }
                Op::Attention(c) => self.attention_backward(c, gd, &mut grads),
                Op::MaskedMeanPool {
                    x,
                    tokens,
                    mask,
                    counts,
                } => {
                    let shape = self.nodes[*x].value.shape().to_vec();
                    let d = shape[1];
                    let gx = acc(&mut grads, *x, &shape);
                    for (row, &valid) in mask.iter().enumerate() {
                        if !valid {
                            continue;
                        }
                        let b = row / tokens;
                        let inv = 1.0 / counts[b] as f64;
                        for (o, v) in gx[row * d..(row + 1) * d].iter_mut().zip(&gd[b * d..(b + 1) * d]) {
                            *o += v * inv;
                        }
                    }
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn attention_backward(&self, c: &AttentionCache, gd: &[f64], grads: &mut [Option<Tensor>]) {
        let (tq, tk, tv) = (&self.nodes[c.q].value, &self.nodes[c.k].value, &self.nodes[c.v].value);
        let shape = tq.shape().to_vec();
        let d = shape[1];
        let (t, heads) = (c.tokens, c.heads);
        let dk = d / heads;
        let inv_scale = 1.0 / math::sqrt(dk as f64);
        let (qd, kd, vd) = (tq.data(), tk.data(), tv.data());
        let mut gq = vec![0.0; qd.len()];
        let mut gk = vec![0.0; kd.len()];
        let mut gv = vec![0.0; vd.len()];
        let mut dp = vec![0.0; t];
        for b in 0..c.batch {
            for h in 0..heads {
                let off = h * dk;
                for i in 0..t {
                    let p = &c.probs[((b * heads + h) * t + i) * t..][..t];
                    let go = &gd[(b * t + i) * d + off..][..dk];
                    let mut weighted = 0.0;
                    for j in 0..t {
                        if !c.mask[b * t + j] {
                            continue;
                        }
                        let vj = (b * t + j) * d + off;
                        dp[j] = go.iter().zip(&vd[vj..vj + dk]).map(|(x, y)| x * y).sum();
                        weighted += p[j] * dp[j];
                        for (o, x) in gv[vj..vj + dk].iter_mut().zip(go) {
                            *o += p[j] * x;
                        }
                    }
                    let qi = (b * t + i) * d + off;
                    for j in 0..t {
                        if !c.mask[b * t + j] {
                            continue;
                        }
                        let ds = p[j] * (dp[j] - weighted) * inv_scale;
                        if ds == 0.0 {
                            continue;
                        }
                        let kj = (b * t + j) * d + off;
                        for x in 0..dk {
                            gq[qi + x] += ds * kd[kj + x];
                            gk[kj + x] += ds * qd[qi + x];
                        }
                    }
                }
            }
        }
        add_into(acc(grads, c.q, &shape), &gq);
        add_into(acc(grads, c.k, &shape), &gk);
        add_into(acc(grads, c.v, &shape), &gv);
    }
}

fn acc<'a>(grads: &'a mut [Option<Tensor>], idx: usize, shape: &[usize]) -> &'a mut [f64] {
    grads[idx].get_or_insert_with(|| Tensor::zeros(shape)).data_mut()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (o, v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}
