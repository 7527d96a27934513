use std::collections::HashMap;
use std::sync::Arc;

use rand::Rng;

use crate::fused::{arc, attention, recurrent};
use crate::params::{ParamId, ParamStore};
use crate::tensor::{matmul_into, Layout, Scalar, Tensor};
use crate::NeuralError;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Row layout of a padded batch: sequence `b`, position `t` lives in row
/// `b * max_len + t`; rows with `t >= lengths[b]` are padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeqLayout {
    pub max_len: usize,
    pub lengths: Vec<usize>,
}

impl SeqLayout {
    pub fn new(lengths: Vec<usize>) -> Self {
        let max_len = lengths.iter().copied().max().unwrap_or(0);
        Self { max_len, lengths }
    }

    pub fn batch(&self) -> usize {
        self.lengths.len()
    }

    pub fn rows(&self) -> usize {
        self.batch() * self.max_len
    }

    pub fn row(&self, b: usize, t: usize) -> usize {
        b * self.max_len + t
    }

    pub fn is_valid(&self, row: usize) -> bool {
        row % self.max_len < self.lengths[row / self.max_len]
    }

    /// Rows holding real tokens, in batch-major order.
    pub fn valid_rows(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.lengths.iter().sum());
        for (b, &len) in self.lengths.iter().enumerate() {
            out.extend((0..len).map(|t| self.row(b, t)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reduction {
    Mean,
    Sum,
}

enum Op<T> {
    Input,
    Param,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        rstd: Vec<T>,
    },
    GatherRows(Var, Vec<usize>),
    ConcatCols(Var, Var),
    ConcatRows(Var, Var),
    Dropout(Var, Vec<T>),
    CrossEntropy {
        logits: Var,
        targets: Vec<Option<usize>>,
        probs: Vec<T>,
        denom: T,
    },
    Attention {
        qkv: Var,
        layout: SeqLayout,
        heads: usize,
        causal: bool,
        probs: Vec<T>,
    },
    Lstm {
        gates: Var,
        w_hh: Var,
        layout: SeqLayout,
        reverse: bool,
        saved: recurrent::Saved<T>,
    },
    ArcScores {
        dep: Var,
        head: Var,
        root: Var,
        layout: SeqLayout,
    },
    RowBlockDot(Var, Var),
    Sum(Var),
}

struct Node<T> {
    value: Arc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Tape of one forward computation. Build it, call [`backward`](Graph::backward)
/// on a scalar node, then drop it.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    params: HashMap<ParamId, Var>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value: Arc::new(value),
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Constant input; receives no gradient.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Free leaf that receives a gradient.
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, true)
    }

    /// Parameter leaf. Repeated calls for the same id return the same node,
    /// so every use of a parameter accumulates into one gradient.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: store.shared(id),
            op: Op::Param,
            requires_grad: !store.is_frozen(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.rows(), "matmul {:?} x {:?}", x.shape(), y.shape());
        let out = x.matmul(y);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMul(a, b), rg)
    }

    /// `a · bᵀ`.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.cols(), "matmul_nt {:?} x {:?}ᵀ", x.shape(), y.shape());
        let (m, k, n) = (x.rows(), x.cols(), y.rows());
        let mut out = Tensor::zeros(m, n);
        matmul_into(m, k, n, x.data(), Layout::N, y.data(), Layout::T, T::zero(), out.data_mut());
        let rg = self.rg(&[a, b]);
        self.push(out, Op::MatMulNT(a, b), rg)
    }

    /// Adds a `[1, n]` row vector to every row of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Var {
        let (xv, bv) = (self.value(x), self.value(bias));
        assert_eq!(bv.shape(), [1, xv.cols()], "bias shape");
        let mut out = xv.clone();
        let n = xv.cols();
        for row in out.data_mut().chunks_exact_mut(n) {
            for (o, &b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        let rg = self.rg(&[x, bias]);
        self.push(out, Op::AddBias(x, bias), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "add shapes");
        let mut out = x.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
            *o += v;
        }
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "mul shapes");
        let mut out = x.clone();
        for (o, &v) in out.data_mut().iter_mut().zip(y.data()) {
            *o *= v;
        }
        let rg = self.rg(&[a, b]);
        self.push(out, Op::Mul(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let out = self.value(x).map(|v| v * c);
        let rg = self.rg(&[x]);
        self.push(out, Op::Scale(x, c), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(T::tanh);
        let rg = self.rg(&[x]);
        self.push(out, Op::Tanh(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(sigmoid);
        let rg = self.rg(&[x]);
        self.push(out, Op::Sigmoid(x), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.rg(&[x]);
        self.push(out, Op::Relu(x), rg)
    }

    /// Row-wise layer normalization with learned `[1, n]` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Var {
        let xv = self.value(x);
        let n = xv.cols();
        let (g, b) = (self.value(gamma), self.value(beta));
        assert_eq!(g.shape(), [1, n]);
        assert_eq!(b.shape(), [1, n]);
        let mut out = Tensor::zeros(xv.rows(), n);
        let mut xhat = vec![T::zero(); xv.len()];
        let mut rstd = Vec::with_capacity(xv.rows());
        let inv_n = T::of(1.0 / n as f64);
        for i in 0..xv.rows() {
            let row = xv.row(i);
            let mu = row.iter().copied().sum::<T>() * inv_n;
            let var = row.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>() * inv_n;
            let r = T::one() / (var + T::of(eps)).sqrt();
            rstd.push(r);
            let xh = &mut xhat[i * n..(i + 1) * n];
            let o = out.row_mut(i);
            for j in 0..n {
                xh[j] = (row[j] - mu) * r;
                o[j] = xh[j] * g.data()[j] + b.data()[j];
            }
        }
        let rg = self.rg(&[x, gamma, beta]);
        self.push(
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            },
            rg,
        )
    }

    /// Rows `idx[i]` of `src`, stacked. Used for embedding lookup.
    pub fn gather_rows(&mut self, src: Var, idx: &[usize]) -> Var {
        let s = self.value(src);
        let n = s.cols();
        let mut data = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            assert!(i < s.rows(), "row {i} out of range for {} rows", s.rows());
            data.extend_from_slice(s.row(i));
        }
        let out = Tensor::from_vec(idx.len(), n, data);
        let rg = self.rg(&[src]);
        self.push(out, Op::GatherRows(src, idx.to_vec()), rg)
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.rows(), y.rows(), "concat_cols rows");
        let mut data = Vec::with_capacity(x.len() + y.len());
        for i in 0..x.rows() {
            data.extend_from_slice(x.row(i));
            data.extend_from_slice(y.row(i));
        }
        let out = Tensor::from_vec(x.rows(), x.cols() + y.cols(), data);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::ConcatCols(a, b), rg)
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols(), y.cols(), "concat_rows cols");
        let mut data = x.data().to_vec();
        data.extend_from_slice(y.data());
        let out = Tensor::from_vec(x.rows() + y.rows(), x.cols(), data);
        let rg = self.rg(&[a, b]);
        self.push(out, Op::ConcatRows(a, b), rg)
    }

    /// Inverted dropout; identity when `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = T::of(1.0 / (1.0 - p));
        let xv = self.value(x);
        let mask: Vec<T> = (0..xv.len())
            .map(|_| if rng.random::<f64>() < p { T::zero() } else { keep })
            .collect();
        let mut out = xv.clone();
        for (o, &m) in out.data_mut().iter_mut().zip(&mask) {
            *o *= m;
        }
        let rg = self.rg(&[x]);
        self.push(out, Op::Dropout(x, mask), rg)
    }

    /// Softmax cross-entropy of each row against its target; rows with
    /// `None` are ignored. `Mean` divides by the number of scored rows.
    pub fn cross_entropy(
        &mut self,
        logits: Var,
        targets: &[Option<usize>],
        reduction: Reduction,
    ) -> Var {
        let lv = self.value(logits);
        assert_eq!(lv.rows(), targets.len(), "one target per logit row");
        let v = lv.cols();
        let mut probs = vec![T::zero(); lv.len()];
        let mut total = 0.0f64;
        let mut count = 0usize;
        for (i, t) in targets.iter().enumerate() {
            let Some(t) = *t else { continue };
            assert!(t < v, "target {t} outside {v} classes");
            let row = lv.row(i);
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let p = &mut probs[i * v..(i + 1) * v];
            let mut z = T::zero();
            for (pj, &x) in p.iter_mut().zip(row) {
                *pj = (x - max).exp();
                z += *pj;
            }
            for pj in p.iter_mut() {
                *pj = *pj / z;
            }
            total += (z.ln() - (row[t] - max)).as_f64();
            count += 1;
        }
        let denom = match reduction {
            Reduction::Mean => count.max(1) as f64,
            Reduction::Sum => 1.0,
        };
        let out = Tensor::scalar(T::of(total / denom));
        let rg = self.rg(&[logits]);
        self.push(
            out,
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
                denom: T::of(denom),
            },
            rg,
        )
    }

    /// Multi-head scaled dot-product self-attention over packed `[N, 3d]`
    /// query/key/value rows. Keys beyond each sequence length are masked, as
    /// are future keys when `causal`. Padding rows output zeros.
    pub fn attention(&mut self, qkv: Var, layout: &SeqLayout, heads: usize, causal: bool) -> Var {
        let (out, probs) = attention::forward(self.value(qkv), layout, heads, causal);
        let rg = self.rg(&[qkv]);
        self.push(
            out,
            Op::Attention {
                qkv,
                layout: layout.clone(),
                heads,
                causal,
                probs,
            },
            rg,
        )
    }

    /// LSTM recurrence over precomputed input gates `[N, 4h]` (gate order
    /// i, f, g, o) with recurrent weights `[h, 4h]`. `reverse` runs each
    /// sequence right to left. Padding rows output zeros.
    pub fn lstm(&mut self, gates: Var, w_hh: Var, layout: &SeqLayout, reverse: bool) -> Var {
        let (out, saved) = recurrent::forward(self.value(gates), self.value(w_hh), layout, reverse);
        let rg = self.rg(&[gates, w_hh]);
        self.push(
            out,
            Op::Lstm {
                gates,
                w_hh,
                layout: layout.clone(),
                reverse,
                saved,
            },
            rg,
        )
    }

    /// Per-sequence arc scores `[N, max_len + 1]`: column 0 is
    /// `dep_i · root`, column `j + 1` is `dep_i · head_j` within the same
    /// sequence. Columns past the sequence length hold [`MASKED_SCORE`].
    pub fn arc_scores(&mut self, dep: Var, head: Var, root: Var, layout: &SeqLayout) -> Var {
        let out = arc::forward(self.value(dep), self.value(head), self.value(root), layout);
        let rg = self.rg(&[dep, head, root]);
        self.push(
            out,
            Op::ArcScores {
                dep,
                head,
                root,
                layout: layout.clone(),
            },
            rg,
        )
    }

    /// `out[i, l] = Σ_k t[i, l·d + k] · g[i, k]` for `t: [N, L·d]`, `g: [N, d]`.
    pub fn row_block_dot(&mut self, t: Var, g: Var) -> Var {
        let out = arc::row_block_dot(self.value(t), self.value(g));
        let rg = self.rg(&[t, g]);
        self.push(out, Op::RowBlockDot(t, g), rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let out = Tensor::scalar(self.value(x).sum());
        let rg = self.rg(&[x]);
        self.push(out, Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len();
        let s = self.sum(x);
        self.scale(s, T::of(1.0 / n as f64))
    }

    /// Reverse-mode sweep from a `[1, 1]` node.
    pub fn backward(&self, loss: Var) -> Result<Grads<T>, NeuralError> {
        let lv = self.value(loss);
        if lv.shape() != [1, 1] {
            return Err(NeuralError::NonScalarLoss(lv.shape()));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(gy) = grads[i].take() else { continue };
            self.backprop(i, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        let params = self.params.iter().map(|(&id, &v)| (id, v)).collect();
        Ok(Grads { grads, params })
    }

    fn backprop(&self, i: usize, gy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Input | Op::Param => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if let Some(da) = self.slot(grads, *a) {
                    matmul_into(m, n, k, gy, Layout::N, bv.data(), Layout::T, T::one(), da);
                }
                if let Some(db) = self.slot(grads, *b) {
                    matmul_into(k, m, n, av.data(), Layout::T, gy, Layout::N, T::one(), db);
                }
            }
            Op::MatMulNT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.rows());
                if let Some(da) = self.slot(grads, *a) {
                    matmul_into(m, n, k, gy, Layout::N, bv.data(), Layout::N, T::one(), da);
                }
                if let Some(db) = self.slot(grads, *b) {
                    matmul_into(n, m, k, gy, Layout::T, av.data(), Layout::N, T::one(), db);
                }
            }
            Op::AddBias(x, b) => {
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, gy, T::one());
                }
                if let Some(db) = self.slot(grads, *b) {
                    for row in gy.chunks_exact(db.len()) {
                        axpy(db, row, T::one());
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    if let Some(d) = self.slot(grads, *v) {
                        axpy(d, gy, T::one());
                    }
                }
            }
            Op::Mul(a, b) => {
                if let Some(da) = self.slot(grads, *a) {
                    for ((d, &g), &o) in da.iter_mut().zip(gy).zip(self.value(*b).data()) {
                        *d += g * o;
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    for ((d, &g), &o) in db.iter_mut().zip(gy).zip(self.value(*a).data()) {
                        *d += g * o;
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(dx) = self.slot(grads, *x) {
                    axpy(dx, gy, *c);
                }
            }
            Op::Tanh(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &g), &o) in dx.iter_mut().zip(gy).zip(y.data()) {
                        *d += g * (T::one() - o * o);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &g), &o) in dx.iter_mut().zip(gy).zip(y.data()) {
                        *d += g * o * (T::one() - o);
                    }
                }
            }
            Op::Relu(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &g), &o) in dx.iter_mut().zip(gy).zip(y.data()) {
                        if o > T::zero() {
                            *d += g;
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                rstd,
            } => {
                let n = y.cols();
                let g = self.value(*gamma).data().to_vec();
                if let Some(dg) = self.slot(grads, *gamma) {
                    for (grow, xrow) in gy.chunks_exact(n).zip(xhat.chunks_exact(n)) {
                        for j in 0..n {
                            dg[j] += grow[j] * xrow[j];
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *beta) {
                    for grow in gy.chunks_exact(n) {
                        axpy(db, grow, T::one());
                    }
                }
                if let Some(dx) = self.slot(grads, *x) {
                    let inv_n = T::of(1.0 / n as f64);
                    let mut dxhat = vec![T::zero(); n];
                    for (r, ((grow, xrow), drow)) in gy
                        .chunks_exact(n)
                        .zip(xhat.chunks_exact(n))
                        .zip(dx.chunks_exact_mut(n))
                        .enumerate()
                    {
                        let mut m1 = T::zero();
                        let mut m2 = T::zero();
                        for j in 0..n {
                            dxhat[j] = grow[j] * g[j];
                            m1 += dxhat[j];
                            m2 += dxhat[j] * xrow[j];
                        }
                        m1 *= inv_n;
                        m2 *= inv_n;
                        for j in 0..n {
                            drow[j] += rstd[r] * (dxhat[j] - m1 - xrow[j] * m2);
                        }
                    }
                }
            }
            Op::GatherRows(src, idx) => {
                if let Some(ds) = self.slot(grads, *src) {
                    let n = y.cols();
                    for (r, &s) in idx.iter().enumerate() {
                        axpy(&mut ds[s * n..(s + 1) * n], &gy[r * n..(r + 1) * n], T::one());
                    }
                }
            }
            Op::ConcatCols(a, b) => {
                let p = self.value(*a).cols();
                let n = y.cols();
                if let Some(da) = self.slot(grads, *a) {
                    for (d, g) in da.chunks_exact_mut(p).zip(gy.chunks_exact(n)) {
                        axpy(d, &g[..p], T::one());
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    let q = n - p;
                    for (d, g) in db.chunks_exact_mut(q).zip(gy.chunks_exact(n)) {
                        axpy(d, &g[p..], T::one());
                    }
                }
            }
            Op::ConcatRows(a, b) => {
                let split = self.value(*a).len();
                if let Some(da) = self.slot(grads, *a) {
                    axpy(da, &gy[..split], T::one());
                }
                if let Some(db) = self.slot(grads, *b) {
                    axpy(db, &gy[split..], T::one());
                }
            }
            Op::Dropout(x, mask) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for ((d, &g), &m) in dx.iter_mut().zip(gy).zip(mask) {
                        *d += g * m;
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                probs,
                denom,
            } => {
                if let Some(dl) = self.slot(grads, *logits) {
                    let v = self.value(*logits).cols();
                    let s = gy[0] / *denom;
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let d = &mut dl[r * v..(r + 1) * v];
                        for (dj, &pj) in d.iter_mut().zip(&probs[r * v..(r + 1) * v]) {
                            *dj += s * pj;
                        }
                        d[t] -= s;
                    }
                }
            }
            Op::Attention {
                qkv,
                layout,
                heads,
                causal,
                probs,
            } => {
                if let Some(dq) = self.slot(grads, *qkv) {
                    attention::backward(self.value(*qkv), probs, gy, layout, *heads, *causal, dq);
                }
            }
            Op::Lstm {
                gates,
                w_hh,
                layout,
                reverse,
                saved,
            } => {
                let whh = self.value(*w_hh);
                let dgates = recurrent::backward(whh, y, saved, gy, layout, *reverse);
                if let Some(dw) = self.slot(grads, *w_hh) {
                    recurrent::accumulate_whh(y, &dgates, layout, *reverse, whh.rows(), dw);
                }
                if let Some(dg) = self.slot(grads, *gates) {
                    axpy(dg, &dgates, T::one());
                }
            }
            Op::ArcScores {
                dep,
                head,
                root,
                layout,
            } => {
                let (dv, hv, rv) = (self.value(*dep), self.value(*head), self.value(*root));
                if let Some(dd) = self.slot(grads, *dep) {
                    arc::backward_dep(hv, rv, gy, layout, dd);
                }
                if let Some(dh) = self.slot(grads, *head) {
                    arc::backward_head(dv, gy, layout, dh);
                }
                if let Some(dr) = self.slot(grads, *root) {
                    arc::backward_root(dv, gy, layout, dr);
                }
            }
            Op::RowBlockDot(t, g) => {
                let (tv, gv) = (self.value(*t), self.value(*g));
                if let Some(dt) = self.slot(grads, *t) {
                    arc::row_block_dot_backward_t(gv, gy, dt);
                }
                if let Some(dg) = self.slot(grads, *g) {
                    arc::row_block_dot_backward_g(tv, gy, dg);
                }
            }
            Op::Sum(x) => {
                if let Some(dx) = self.slot(grads, *x) {
                    for d in dx.iter_mut() {
                        *d += gy[0];
                    }
                }
            }
        }
    }

    /// Gradient buffer of `v`, created on first use; `None` when `v` does
    /// not need a gradient.
    fn slot<'g>(&self, grads: &'g mut [Option<Vec<T>>], v: Var) -> Option<&'g mut [T]> {
        let node = &self.nodes[v.0];
        if !node.requires_grad {
            return None;
        }
        Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); node.value.len()]))
    }
}

/// Gradients produced by [`Graph::backward`].
pub struct Grads<T> {
    grads: Vec<Option<Vec<T>>>,
    params: Vec<(ParamId, Var)>,
}

impl<T: Scalar> Grads<T> {
    /// Gradient of any node that required one and was reached.
    pub fn of(&self, v: Var) -> Option<&[T]> {
        self.grads[v.0].as_deref()
    }

    pub fn param(&self, id: ParamId) -> Option<&[T]> {
        self.params
            .iter()
            .find(|(p, _)| *p == id)
            .and_then(|(_, v)| self.of(*v))
    }

    /// Reached, trainable parameters with their gradients, by id.
    pub fn params(&self) -> Vec<(ParamId, &[T])> {
        let mut out: Vec<(ParamId, &[T])> = self
            .params
            .iter()
            .filter_map(|(p, v)| self.of(*v).map(|g| (*p, g)))
            .collect();
        out.sort_by_key(|(p, _)| *p);
        out
    }

    /// Trainable parameters of `store` that the loss never reached.
    pub fn detached(&self, store: &ParamStore<T>) -> Vec<ParamId> {
        store
            .ids()
            .filter(|&id| !store.is_frozen(id) && self.param(id).is_none())
            .collect()
    }
}

pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

pub(crate) fn axpy<T: Scalar>(y: &mut [T], x: &[T], a: T) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
