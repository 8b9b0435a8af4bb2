//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Graph`] is a tape of nodes, each holding its forward value and the
//! op that produced it. Ops are a closed enum with hand-written exact
//! backward rules; `backward` walks the tape once in reverse. Graphs are
//! build-once/backward-once and cheap to throw away, so each training pair
//! gets its own graph while parameters live outside in a store.
//!
//! Parameters enter as named leaves (small tensors are snapshotted) or via
//! [`Graph::gather_rows_leaf`], which pulls selected rows out of a large
//! embedding table and reports its gradient sparsely.

use crate::scalar::Real;
use crate::tensor::Tensor;
use std::collections::HashMap;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[allow(clippy::large_enum_variant)]
enum Op<T> {
    Leaf,
    /// Leaf bound to a named parameter; gradient reported densely.
    ParamLeaf(String),
    /// Leaf holding `rows` gathered from a named parameter; gradient
    /// reported as (name, rows, row grads).
    GatherLeaf {
        name: String,
        rows: Vec<usize>,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    /// Clamp into (eps, 1-eps); gradient passes through strictly inside.
    ClampUnit(Var, T),
    ConcatCols(Vec<Var>),
    /// Lay out m token tensors [n, d] as a [n*d, m] matrix (tokens as
    /// columns), so mixing across tokens becomes a plain matmul.
    StackCols(Vec<Var>),
    /// Inverse of one column of `StackCols`: column q back to [n, d].
    TakeTokenColumn {
        src: Var,
        q: usize,
        n: usize,
        d: usize,
    },
    GatherRows(Var, Vec<usize>),
    SumAll(Var),
    MeanAll(Var),
    /// Time2Vec: channel 0 linear, channels >= 1 sine. `omega`/`bias` are
    /// [1, d] parameter rows, times are constants.
    Time2Vec {
        omega: Var,
        bias: Var,
        times: Vec<T>,
    },
    /// Row-wise softmax over the entries where mask is true; false entries
    /// output 0 and receive no gradient.
    MaskedSoftmaxRow(Var, Vec<bool>),
    /// Summed binary cross-entropy of probabilities against constant labels.
    BceSum(Var, Vec<T>),
    /// Elementwise -log(sigmoid(x)), computed stably.
    SoftplusNeg(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Gradients extracted by [`Graph::backward`], keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub dense: Vec<(String, Tensor<T>)>,
    /// Sparse row updates: (name, row indices, one grad row per index).
    pub rows: Vec<(String, Vec<usize>, Tensor<T>)>,
}

impl<T> Default for Gradients<T> {
    fn default() -> Self {
        Gradients {
            dense: Vec::new(),
            rows: Vec::new(),
        }
    }
}

/// Reverse-mode tape.
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    param_cache: HashMap<String, Var>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            param_cache: HashMap::new(),
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

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        debug_assert!(value.all_finite(), "non-finite value produced on the tape");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Constant leaf; receives no gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Named parameter leaf. The value is snapshotted; repeated calls with
    /// the same name return the same node.
    pub fn param_leaf(&mut self, name: &str, value: &Tensor<T>) -> Var {
        if let Some(&v) = self.param_cache.get(name) {
            return v;
        }
        let v = self.push(value.clone(), Op::ParamLeaf(name.to_string()));
        self.param_cache.insert(name.to_string(), v);
        v
    }

    /// Rows gathered from a named parameter table; the gradient is reported
    /// sparsely so large tables never materialize a dense gradient here.
    pub fn gather_rows_leaf(&mut self, name: &str, table: &Tensor<T>, rows: &[usize]) -> Var {
        let mut out = Tensor::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.add_assign_row(i, table.row_slice(r));
        }
        self.push(
            out,
            Op::GatherLeaf {
                name: name.to_string(),
                rows: rows.to_vec(),
            },
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "add: shape mismatch"
        );
        let mut out = self.value(a).clone();
        out.add_assign(self.value(b));
        self.push(out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "sub: shape mismatch"
        );
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        self.push(Tensor::from_vec(r, c, data), Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).shape(),
            self.value(b).shape(),
            "mul: shape mismatch"
        );
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x * y)
            .collect();
        self.push(Tensor::from_vec(r, c, data), Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Var {
        let (rows, cols) = self.value(a).shape();
        let data = self.value(a).data().iter().map(|&x| x * c).collect();
        self.push(Tensor::from_vec(rows, cols, data), Op::Scale(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(
            self.value(a).cols(),
            self.value(b).rows(),
            "matmul: inner dim mismatch"
        );
        let out = self.value(a).matmul(self.value(b));
        self.push(out, Op::MatMul(a, b))
    }

    /// `[n, m] + [1, m]` broadcast bias add.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Var {
        assert_eq!(self.value(bias).rows(), 1, "add_row: bias must be a row");
        assert_eq!(
            self.value(x).cols(),
            self.value(bias).cols(),
            "add_row: width mismatch"
        );
        let cols = self.value(x).cols();
        let mut out = self.value(x).clone();
        {
            let b = self.value(bias).data();
            for chunk in out.data_mut().chunks_exact_mut(cols) {
                for (v, &bv) in chunk.iter_mut().zip(b) {
                    *v += bv;
                }
            }
        }
        self.push(out, Op::AddRow(x, bias))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.value(a).shape();
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&x| x.max(T::zero()))
            .collect();
        self.push(Tensor::from_vec(r, c, data), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.value(a).shape();
        let data = self.value(a).data().iter().map(|&x| sigmoid(x)).collect();
        self.push(Tensor::from_vec(r, c, data), Op::Sigmoid(a))
    }

    pub fn clamp_unit(&mut self, a: Var, eps: T) -> Var {
        let (r, c) = self.value(a).shape();
        let hi = T::one() - eps;
        let data = self
            .value(a)
            .data()
            .iter()
            .map(|&x| x.max(eps).min(hi))
            .collect();
        self.push(Tensor::from_vec(r, c, data), Op::ClampUnit(a, eps))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut c0 = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols: row mismatch");
            let w = v.cols();
            for r in 0..rows {
                out.data_mut()[r * cols + c0..r * cols + c0 + w].copy_from_slice(v.row_slice(r));
            }
            c0 += w;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    /// Tokens-as-columns layout: m tensors [n, d] -> [n*d, m].
    pub fn stack_cols(&mut self, tokens: &[Var]) -> Var {
        assert!(!tokens.is_empty());
        let (n, d) = self.value(tokens[0]).shape();
        let m = tokens.len();
        let mut out = Tensor::zeros(n * d, m);
        for (q, &tok) in tokens.iter().enumerate() {
            let v = self.value(tok);
            assert_eq!(v.shape(), (n, d), "stack_cols: token shape mismatch");
            let src = v.data();
            let dst = out.data_mut();
            for (e, &x) in src.iter().enumerate() {
                dst[e * m + q] = x;
            }
        }
        self.push(out, Op::StackCols(tokens.to_vec()))
    }

    /// Column `q` of a `stack_cols` layout back to [n, d].
    pub fn take_token_column(&mut self, src: Var, q: usize, n: usize, d: usize) -> Var {
        let v = self.value(src);
        assert_eq!(v.rows(), n * d, "take_token_column: layout mismatch");
        let m = v.cols();
        let mut out = Tensor::zeros(n, d);
        {
            let s = v.data();
            for (e, x) in out.data_mut().iter_mut().enumerate() {
                *x = s[e * m + q];
            }
        }
        self.push(out, Op::TakeTokenColumn { src, q, n, d })
    }

    pub fn gather_rows(&mut self, src: Var, rows: &[usize]) -> Var {
        let cols = self.value(src).cols();
        let mut out = Tensor::zeros(rows.len(), cols);
        for (i, &r) in rows.iter().enumerate() {
            out.set_row(i, self.value(src).row_slice(r));
        }
        self.push(out, Op::GatherRows(src, rows.to_vec()))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self
            .value(a)
            .data()
            .iter()
            .fold(T::zero(), |acc, &x| acc + x);
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        assert!(n > 0, "mean_all over empty tensor");
        let s = self
            .value(a)
            .data()
            .iter()
            .fold(T::zero(), |acc, &x| acc + x);
        self.push(Tensor::scalar(s / T::from_usize(n)), Op::MeanAll(a))
    }

    /// Time2Vec of constant times against [1, d] frequency/phase rows:
    /// channel 0 is `w0*t + b0`, channels i >= 1 are `sin(wi*t + bi)`.
    pub fn time2vec(&mut self, omega: Var, bias: Var, times: &[T]) -> Var {
        let d = self.value(omega).cols();
        assert!(d >= 2, "time2vec needs at least 2 channels");
        assert_eq!(
            self.value(bias).cols(),
            d,
            "time2vec: omega/bias width mismatch"
        );
        let n = times.len();
        let mut out = Tensor::zeros(n, d);
        for (i, &t) in times.iter().enumerate() {
            for j in 0..d {
                let z = self.value(omega).at(0, j) * t + self.value(bias).at(0, j);
                out.set(i, j, if j == 0 { z } else { z.sin() });
            }
        }
        self.push(
            out,
            Op::Time2Vec {
                omega,
                bias,
                times: times.to_vec(),
            },
        )
    }

    pub fn masked_softmax_row(&mut self, x: Var, mask: &[bool]) -> Var {
        let v = self.value(x);
        assert_eq!(v.rows(), 1, "masked_softmax_row expects a row vector");
        assert_eq!(v.cols(), mask.len());
        assert!(
            mask.iter().any(|&m| m),
            "masked_softmax_row: all entries masked"
        );
        let mut hi = T::neg_infinity();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                hi = hi.max(v.at(0, i));
            }
        }
        let mut exps = vec![T::zero(); mask.len()];
        let mut total = T::zero();
        for (i, &m) in mask.iter().enumerate() {
            if m {
                exps[i] = (v.at(0, i) - hi).exp();
                total += exps[i];
            }
        }
        for e in exps.iter_mut() {
            *e /= total;
        }
        self.push(Tensor::row(exps), Op::MaskedSoftmaxRow(x, mask.to_vec()))
    }

    /// Summed binary cross-entropy against constant labels; probabilities
    /// must already be strictly inside (0, 1).
    pub fn bce_sum(&mut self, p: Var, labels: &[T]) -> Var {
        let v = self.value(p);
        assert_eq!(v.len(), labels.len(), "bce_sum: length mismatch");
        let mut loss = T::zero();
        for (&pi, &yi) in v.data().iter().zip(labels.iter()) {
            debug_assert!(
                pi > T::zero() && pi < T::one(),
                "bce_sum: probability out of (0,1)"
            );
            loss -= yi * pi.ln() + (T::one() - yi) * (T::one() - pi).ln();
        }
        self.push(Tensor::scalar(loss), Op::BceSum(p, labels.to_vec()))
    }

    /// Elementwise `-log(sigmoid(x))`, the pairwise logistic ranking term.
    pub fn softplus_neg(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).shape();
        let data = self.value(x).data().iter().map(|&z| softplus(-z)).collect();
        self.push(Tensor::from_vec(r, c, data), Op::SoftplusNeg(x))
    }

    /// Reverse pass from a scalar output; returns parameter gradients.
    pub fn backward(&mut self, loss: Var) -> Gradients<T> {
        assert_eq!(self.value(loss).len(), 1, "backward expects a scalar loss");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));

        for idx in (0..self.nodes.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            // Re-stash for parameter extraction below.
            let g = {
                grads[idx] = Some(g);
                grads[idx].clone().unwrap()
            };
            match &self.nodes[idx].op {
                Op::Leaf | Op::ParamLeaf(_) | Op::GatherLeaf { .. } => {}
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accum(&mut grads, a, &g);
                    self.accum(&mut grads, b, &g);
                }
                Op::Sub(a, b) => {
                    let (a, b) = (*a, *b);
                    self.accum(&mut grads, a, &g);
                    let mut neg = g.clone();
                    neg.data_mut().iter_mut().for_each(|x| *x = -*x);
                    self.accum(&mut grads, b, &neg);
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = elementwise_mul(&g, self.value(b));
                    let gb = elementwise_mul(&g, self.value(a));
                    self.accum(&mut grads, a, &ga);
                    self.accum(&mut grads, b, &gb);
                }
                Op::Scale(a, c) => {
                    let (a, c) = (*a, *c);
                    let mut ga = g.clone();
                    ga.data_mut().iter_mut().for_each(|x| *x *= c);
                    self.accum(&mut grads, a, &ga);
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.matmul(&self.value(b).transpose());
                    let gb = self.value(a).transpose().matmul(&g);
                    self.accum(&mut grads, a, &ga);
                    self.accum(&mut grads, b, &gb);
                }
                Op::AddRow(x, bias) => {
                    let (x, bias) = (*x, *bias);
                    self.accum(&mut grads, x, &g);
                    let mut gb = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        gb.add_assign_row(0, g.row_slice(r));
                    }
                    self.accum(&mut grads, bias, &gb);
                }
                Op::Relu(a) => {
                    let a = *a;
                    let mut ga = g.clone();
                    for (gi, &xi) in ga.data_mut().iter_mut().zip(self.value(a).data()) {
                        if xi <= T::zero() {
                            *gi = T::zero();
                        }
                    }
                    self.accum(&mut grads, a, &ga);
                }
                Op::Sigmoid(a) => {
                    let a = *a;
                    let mut ga = g.clone();
                    for (gi, &si) in ga.data_mut().iter_mut().zip(self.nodes[idx].value.data()) {
                        *gi = *gi * si * (T::one() - si);
                    }
                    self.accum(&mut grads, a, &ga);
                }
                Op::ClampUnit(a, eps) => {
                    let (a, eps) = (*a, *eps);
                    let hi = T::one() - eps;
                    let mut ga = g.clone();
                    for (gi, &xi) in ga.data_mut().iter_mut().zip(self.value(a).data()) {
                        if xi <= eps || xi >= hi {
                            *gi = T::zero();
                        }
                    }
                    self.accum(&mut grads, a, &ga);
                }
                Op::ConcatCols(parts) => {
                    let parts = parts.clone();
                    let gcols = g.cols();
                    let mut c0 = 0;
                    for p in parts {
                        let (pr, pc) = self.value(p).shape();
                        let mut gp = Tensor::zeros(pr, pc);
                        for r in 0..pr {
                            gp.set_row(r, &g.data()[r * gcols + c0..r * gcols + c0 + pc]);
                        }
                        self.accum(&mut grads, p, &gp);
                        c0 += pc;
                    }
                }
                Op::StackCols(tokens) => {
                    let tokens = tokens.clone();
                    let (n, d) = self.value(tokens[0]).shape();
                    let m = tokens.len();
                    for (q, tok) in tokens.into_iter().enumerate() {
                        let mut gt = Tensor::zeros(n, d);
                        for (e, x) in gt.data_mut().iter_mut().enumerate() {
                            *x = g.data()[e * m + q];
                        }
                        self.accum(&mut grads, tok, &gt);
                    }
                }
                Op::TakeTokenColumn { src, q, n, d } => {
                    let (src, q, n, d) = (*src, *q, *n, *d);
                    let (sr, sc) = self.value(src).shape();
                    let mut gs = Tensor::zeros(sr, sc);
                    for (e, &x) in g.data().iter().enumerate() {
                        gs.data_mut()[e * sc + q] = x;
                    }
                    let _ = (n, d);
                    self.accum(&mut grads, src, &gs);
                }
                Op::GatherRows(src, rows) => {
                    let src = *src;
                    let rows = rows.clone();
                    let (sr, sc) = self.value(src).shape();
                    let mut gs = Tensor::zeros(sr, sc);
                    for (i, &r) in rows.iter().enumerate() {
                        gs.add_assign_row(r, g.row_slice(i));
                    }
                    self.accum(&mut grads, src, &gs);
                }
                Op::SumAll(a) => {
                    let a = *a;
                    let (r, c) = self.value(a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    ga.fill(g.item());
                    self.accum(&mut grads, a, &ga);
                }
                Op::MeanAll(a) => {
                    let a = *a;
                    let (r, c) = self.value(a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    ga.fill(g.item() / T::from_usize(r * c));
                    self.accum(&mut grads, a, &ga);
                }
                Op::Time2Vec { omega, bias, times } => {
                    let (omega, bias) = (*omega, *bias);
                    let times = times.clone();
                    let d = self.value(omega).cols();
                    let mut gw = Tensor::zeros(1, d);
                    let mut gb = Tensor::zeros(1, d);
                    for (i, &t) in times.iter().enumerate() {
                        for j in 0..d {
                            let go = g.at(i, j);
                            let slope = if j == 0 {
                                T::one()
                            } else {
                                (self.value(omega).at(0, j) * t + self.value(bias).at(0, j)).cos()
                            };
                            gw.set(0, j, gw.at(0, j) + go * slope * t);
                            gb.set(0, j, gb.at(0, j) + go * slope);
                        }
                    }
                    self.accum(&mut grads, omega, &gw);
                    self.accum(&mut grads, bias, &gb);
                }
                Op::MaskedSoftmaxRow(x, mask) => {
                    let x = *x;
                    let mask = mask.clone();
                    let s = &self.nodes[idx].value;
                    let mut dot = T::zero();
                    for (i, &m) in mask.iter().enumerate() {
                        if m {
                            dot += g.at(0, i) * s.at(0, i);
                        }
                    }
                    let mut gx = Tensor::zeros(1, mask.len());
                    for (i, &m) in mask.iter().enumerate() {
                        if m {
                            gx.set(0, i, s.at(0, i) * (g.at(0, i) - dot));
                        }
                    }
                    self.accum(&mut grads, x, &gx);
                }
                Op::BceSum(p, labels) => {
                    let p = *p;
                    let labels = labels.clone();
                    let gout = g.item();
                    let (r, c) = self.value(p).shape();
                    let mut gp = Tensor::zeros(r, c);
                    for (i, (&pi, &yi)) in
                        self.value(p).data().iter().zip(labels.iter()).enumerate()
                    {
                        let d = -(yi / pi - (T::one() - yi) / (T::one() - pi));
                        gp.data_mut()[i] = gout * d;
                    }
                    self.accum(&mut grads, p, &gp);
                }
                Op::SoftplusNeg(x) => {
                    let x = *x;
                    let mut gx = g.clone();
                    for (gi, &xi) in gx.data_mut().iter_mut().zip(self.value(x).data()) {
                        // d/dx -log(sigmoid(x)) = -sigmoid(-x)
                        *gi *= -sigmoid(-xi);
                    }
                    self.accum(&mut grads, x, &gx);
                }
            }
        }

        let mut out = Gradients::default();
        for (idx, node) in self.nodes.iter().enumerate() {
            let Some(g) = &grads[idx] else {
                continue;
            };
            match &node.op {
                Op::ParamLeaf(name) => out.dense.push((name.clone(), g.clone())),
                Op::GatherLeaf { name, rows } => {
                    out.rows.push((name.clone(), rows.clone(), g.clone()))
                }
                _ => {}
            }
        }
        out
    }

    fn accum(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: &Tensor<T>) {
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(g),
            slot @ None => *slot = Some(g.clone()),
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<T: Real>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn elementwise_mul<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Tensor<T> {
    debug_assert_eq!(a.shape(), b.shape());
    let (r, c) = a.shape();
    Tensor::from_vec(
        r,
        c,
        a.data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| x * y)
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "{a} vs {b}");
    }

    #[test]
    fn matmul_grad_matches_hand_derivation() {
        // loss = sum(x W), d loss / d W = x^T 1
        let mut g = Graph::new();
        let x = g.constant(Tensor::from_vec(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]));
        let w = g.param_leaf("w", &Tensor::from_vec(2, 2, vec![0.5, -1.0, 2.0, 0.25]));
        let y = g.matmul(x, w);
        let loss = g.sum_all(y);
        let grads = g.backward(loss);
        let (_, gw) = &grads.dense[0];
        assert_eq!(gw.data(), &[4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn sigmoid_and_softplus_are_stable() {
        close(sigmoid(800.0f64), 1.0, 1e-15);
        close(sigmoid(-800.0f64), 0.0, 1e-15);
        close(softplus(-800.0f64), 0.0, 1e-15);
        close(softplus(800.0f64), 800.0, 1e-9);
        close(softplus(0.0f64), std::f64::consts::LN_2, 1e-15);
    }

    #[test]
    fn masked_softmax_zeroes_invalid_slots() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::row(vec![1.0f64, 50.0, 2.0]));
        let s = g.masked_softmax_row(x, &[true, false, true]);
        let v = g.value(s);
        close(v.at(0, 1), 0.0, 0.0);
        close(v.at(0, 0) + v.at(0, 2), 1.0, 1e-12);
    }

    #[test]
    fn bce_sum_hand_values() {
        let mut g = Graph::new();
        let p = g.constant(Tensor::row(vec![0.5f64, 0.5]));
        let loss = g.bce_sum(p, &[1.0, 0.0]);
        close(g.value(loss).item(), 2.0 * std::f64::consts::LN_2, 1e-12);
    }

    #[test]
    fn gather_leaf_reports_sparse_grads() {
        let mut g = Graph::new();
        let table = Tensor::from_vec(4, 2, vec![1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let picked = g.gather_rows_leaf("m", &table, &[2, 0, 2]);
        let s = g.sum_all(picked);
        let grads = g.backward(s);
        assert!(grads.dense.is_empty());
        let (name, rows, gr) = &grads.rows[0];
        assert_eq!(name, "m");
        assert_eq!(rows, &vec![2, 0, 2]);
        assert_eq!(gr.shape(), (3, 2));
        assert!(gr.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn stack_and_take_round_trip_gradient() {
        let mut g = Graph::new();
        let t0 = g.param_leaf("t0", &Tensor::from_vec(2, 2, vec![1.0f64, 2.0, 3.0, 4.0]));
        let t1 = g.constant(Tensor::from_vec(2, 2, vec![5.0, 6.0, 7.0, 8.0]));
        let stacked = g.stack_cols(&[t0, t1]);
        assert_eq!(g.value(stacked).shape(), (4, 2));
        let back = g.take_token_column(stacked, 0, 2, 2);
        assert_eq!(g.value(back).data(), &[1.0, 2.0, 3.0, 4.0]);
        let loss = g.sum_all(back);
        let grads = g.backward(loss);
        assert!(grads.dense[0].1.data().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn time2vec_linear_channel_and_periodicity() {
        let mut g = Graph::new();
        let omega = g.constant(Tensor::row(vec![2.0f64, 3.0, 0.5]));
        let bias = g.constant(Tensor::row(vec![0.0f64, 0.0, 0.0]));
        let enc = g.time2vec(omega, bias, &[0.0, 1.0]);
        let v = g.value(enc);
        // t = 0 with zero bias gives the zero vector.
        assert!(v.row_slice(0).iter().all(|&x| x == 0.0));
        close(v.at(1, 0), 2.0, 1e-15);
        close(v.at(1, 1), 3.0f64.sin(), 1e-15);
        // Periodicity of the sine channels.
        let period = 2.0 * std::f64::consts::PI / 3.0;
        let enc2 = g.time2vec(omega, bias, &[1.0 + period]);
        close(g.value(enc2).at(0, 1), 3.0f64.sin(), 1e-9);
    }
}
