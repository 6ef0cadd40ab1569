//! Tape-based reverse-mode automatic differentiation over small dense vectors.
//!
//! A [`Graph`] records every operation of one forward pass as a node in a
//! flat tape. Parameters are read in place from the borrowed [`ParamStore`];
//! [`Graph::backward`] walks the tape in reverse and returns one gradient
//! tensor per stored parameter (zeros for parameters the loss never touched).
//!
//! Node shapes are validated with assertions: shape errors inside the tape
//! are programming errors. Public layer functions check user-facing shapes
//! before recording anything.

use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore, Tensor};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    /// `b + sum_k W_k x_k`
    Affine { terms: Vec<(usize, usize)>, bias: Option<usize> },
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Slice { x: usize, start: usize },
    Concat(Vec<usize>),
    Row { table: usize, row: usize },
    /// Output is `[h'; c']`; aux holds activated gates (4H) then tanh(c') (H).
    LstmCell { gates: usize, c_prev: usize },
    Sum(usize),
    AddN(Vec<usize>),
    Dot(usize, usize),
    SquaredError { pred: usize, target: usize },
    Distance { a: usize, b: usize },
    /// Scalar `-log softmax(logits)[target]`; aux holds the softmax.
    SoftmaxXent { logits: usize, target: usize },
}

#[derive(Debug)]
struct Node {
    op: Op,
    value: Vec<f64>,
    shape: Vec<usize>,
    aux: Vec<f64>,
    requires_grad: bool,
}

/// Gradient of a scalar loss with respect to every parameter of a store.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Tensor>,
    reached: Vec<bool>,
}

impl Gradients {
    pub fn get(&self, pid: ParamId) -> &Tensor {
        &self.grads[pid.0]
    }

    /// Whether the loss graph touched this parameter at all.
    pub fn reached(&self, pid: ParamId) -> bool {
        self.reached[pid.0]
    }

    pub fn by_name<'a>(&'a self, store: &ParamStore, id: &str) -> Option<&'a Tensor> {
        store.lookup(id).map(|pid| self.get(pid))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Tensor)> {
        self.grads.iter().enumerate().map(|(i, t)| (ParamId(i), t))
    }
}

pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<usize>>,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_nodes: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Vec<f64>, shape: Vec<usize>, aux: Vec<f64>, requires_grad: bool) -> Var {
        debug_assert!(value.is_empty() || shape.iter().product::<usize>() == value.len());
        self.nodes.push(Node { op, value, shape, aux, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(pid) => self.store.tensor(pid).values(),
            _ => &node.value,
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let vals = self.value(v);
        assert_eq!(vals.len(), 1, "scalar() on a non-scalar node");
        vals[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        Tensor::new(self.shape(v).to_vec(), self.value(v).to_vec()).expect("node shape is consistent")
    }

    /// Softmax distribution stored by a [`Graph::softmax_xent`] node.
    pub fn softmax_of(&self, v: Var) -> &[f64] {
        match self.nodes[v.0].op {
            Op::SoftmaxXent { .. } => &self.nodes[v.0].aux,
            _ => panic!("softmax_of() on a node that is not a softmax cross-entropy"),
        }
    }

    fn rg(&self, i: usize) -> bool {
        self.nodes[i].requires_grad
    }

    fn numel(&self, v: Var) -> usize {
        self.shape(v).iter().product()
    }

    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let shape = vec![values.len()];
        self.push(Op::Constant, values, shape, Vec::new(), false)
    }

    pub fn constant_tensor(&mut self, t: &Tensor) -> Var {
        self.push(Op::Constant, t.values().to_vec(), t.shape().to_vec(), Vec::new(), false)
    }

    /// Leaf node reading a stored parameter. Repeated calls return the same node.
    pub fn param(&mut self, pid: ParamId) -> Var {
        if let Some(i) = self.param_nodes[pid.0] {
            return Var(i);
        }
        let shape = self.store.tensor(pid).shape().to_vec();
        let v = self.push(Op::Param(pid), Vec::new(), shape, Vec::new(), true);
        self.param_nodes[pid.0] = Some(v.0);
        v
    }

    /// `bias + sum_k W_k x_k`, each `W_k` of shape `[m, n_k]` and `x_k` of length `n_k`.
    pub fn affine(&mut self, terms: &[(Var, Var)], bias: Option<Var>) -> Var {
        assert!(!terms.is_empty() || bias.is_some());
        let m = match (terms.first(), bias) {
            (Some((w, _)), _) => self.shape(*w)[0],
            (None, Some(b)) => self.numel(b),
            (None, None) => unreachable!(),
        };
        let mut out = match bias {
            Some(b) => {
                assert_eq!(self.numel(b), m, "affine bias length");
                self.value(b).to_vec()
            }
            None => vec![0.0; m],
        };
        let mut rg = bias.is_some_and(|b| self.rg(b.0));
        for &(w, x) in terms {
            let shape = self.shape(w);
            assert!(shape.len() == 2 && shape[0] == m, "affine weight shape {shape:?} for output {m}");
            let n = shape[1];
            assert_eq!(self.numel(x), n, "affine input length");
            let wv = self.value(w);
            let xv = self.value(x);
            for (i, o) in out.iter_mut().enumerate() {
                let row = &wv[i * n..(i + 1) * n];
                *o += row.iter().zip(xv).map(|(a, b)| a * b).sum::<f64>();
            }
            rg |= self.rg(w.0) || self.rg(x.0);
        }
        let op = Op::Affine { terms: terms.iter().map(|(w, x)| (w.0, x.0)).collect(), bias: bias.map(|b| b.0) };
        self.push(op, out, vec![m], Vec::new(), rg)
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "elementwise operands differ in shape");
        let out: Vec<f64> = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| f(x, y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(op, out, shape, Vec::new(), rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.value(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x.0);
        self.push(op, out, shape, Vec::new(), rg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x.0, c))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x.0))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x.0))
    }

    /// `max(0, x)`; subgradient 0 at the kink.
    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x.0))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.numel(x), "slice out of range");
        let out = self.value(x)[start..start + len].to_vec();
        let rg = self.rg(x.0);
        self.push(Op::Slice { x: x.0, start }, out, vec![len], Vec::new(), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            out.extend_from_slice(self.value(p));
            rg |= self.rg(p.0);
        }
        let n = out.len();
        self.push(Op::Concat(parts.iter().map(|p| p.0).collect()), out, vec![n], Vec::new(), rg)
    }

    /// Row `row` of a rank-2 table (embedding lookup).
    pub fn row(&mut self, table: Var, row: usize) -> Var {
        let shape = self.shape(table);
        assert!(shape.len() == 2 && row < shape[0], "row {row} out of table shape {shape:?}");
        let n = shape[1];
        let out = self.value(table)[row * n..(row + 1) * n].to_vec();
        let rg = self.rg(table.0);
        self.push(Op::Row { table: table.0, row }, out, vec![n], Vec::new(), rg)
    }

    /// LSTM cell nonlinearity on pre-activations `gates = [i; f; g; o]` (4H).
    /// Returns the packed `[h'; c']` node.
    pub fn lstm_cell(&mut self, gates: Var, c_prev: Var) -> Var {
        let h = self.numel(c_prev);
        assert_eq!(self.numel(gates), 4 * h, "lstm gate length");
        let gv = self.value(gates);
        let cv = self.value(c_prev);
        let mut act = Vec::with_capacity(5 * h);
        act.extend(gv[..h].iter().map(|&v| sigmoid(v)));
        act.extend(gv[h..2 * h].iter().map(|&v| sigmoid(v)));
        act.extend(gv[2 * h..3 * h].iter().map(|&v| v.tanh()));
        act.extend(gv[3 * h..].iter().map(|&v| sigmoid(v)));
        let mut out = vec![0.0; 2 * h];
        for k in 0..h {
            let c = act[h + k] * cv[k] + act[k] * act[2 * h + k];
            let tc = c.tanh();
            out[k] = act[3 * h + k] * tc;
            out[h + k] = c;
            act.push(tc);
        }
        let rg = self.rg(gates.0) || self.rg(c_prev.0);
        self.push(Op::LstmCell { gates: gates.0, c_prev: c_prev.0 }, out, vec![2 * h], act, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).iter().sum();
        let rg = self.rg(x.0);
        self.push(Op::Sum(x.0), vec![s], vec![1], Vec::new(), rg)
    }

    /// Elementwise sum of same-shaped nodes, accumulated left to right.
    pub fn add_n(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "add_n of nothing");
        let shape = self.shape(xs[0]).to_vec();
        let mut out = vec![0.0; self.numel(xs[0])];
        let mut rg = false;
        for &x in xs {
            assert_eq!(self.shape(x), shape.as_slice(), "add_n operands differ in shape");
            for (o, v) in out.iter_mut().zip(self.value(x)) {
                *o += v;
            }
            rg |= self.rg(x.0);
        }
        self.push(Op::AddN(xs.iter().map(|x| x.0).collect()), out, shape, Vec::new(), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.numel(a), self.numel(b), "dot operands differ in length");
        let s = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).sum();
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::Dot(a.0, b.0), vec![s], vec![1], Vec::new(), rg)
    }

    /// `sum_k (pred_k - target_k)^2`
    pub fn squared_error(&mut self, pred: Var, target: Var) -> Var {
        assert_eq!(self.numel(pred), self.numel(target), "squared_error operands differ in length");
        let s = self.value(pred).iter().zip(self.value(target)).map(|(p, t)| (p - t) * (p - t)).sum();
        let rg = self.rg(pred.0) || self.rg(target.0);
        self.push(Op::SquaredError { pred: pred.0, target: target.0 }, vec![s], vec![1], Vec::new(), rg)
    }

    /// Unsquared Euclidean distance `||a - b||_2`; zero gradient where `a == b`.
    pub fn distance(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.numel(a), self.numel(b), "distance operands differ in length");
        let s: f64 = self.value(a).iter().zip(self.value(b)).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(a.0) || self.rg(b.0);
        self.push(Op::Distance { a: a.0, b: b.0 }, vec![s.sqrt()], vec![1], Vec::new(), rg)
    }

    /// Fused, max-shifted `-log softmax(logits)[target]`.
    pub fn softmax_xent(&mut self, logits: Var, target: usize) -> Var {
        let lv = self.value(logits);
        assert!(target < lv.len(), "target index {target} outside {} classes", lv.len());
        let max = lv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + lv.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        let loss = lse - lv[target];
        let probs = softmax(lv);
        let rg = self.rg(logits.0);
        self.push(Op::SoftmaxXent { logits: logits.0, target }, vec![loss], vec![1], probs, rg)
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.numel(loss) != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); loss.0 + 1];
        grads[loss.0] = vec![1.0];
        let mut param_grads: Vec<Option<Vec<f64>>> = vec![None; self.store.len()];

        for i in (0..=loss.0).rev() {
            if grads[i].is_empty() || !self.nodes[i].requires_grad {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(pid) => param_grads[pid.0] = Some(g),
                Op::Affine { terms, bias } => {
                    if let Some(b) = *bias {
                        if self.rg(b) {
                            add_into(acc(&mut grads, b, g.len()), &g);
                        }
                    }
                    for &(w, x) in terms {
                        let n = self.nodes[w].shape[1];
                        if self.rg(x) {
                            let wv = self.value(Var(w));
                            let dx = acc(&mut grads, x, n);
                            for (r, &gi) in g.iter().enumerate() {
                                if gi != 0.0 {
                                    let row = &wv[r * n..(r + 1) * n];
                                    for (d, &wij) in dx.iter_mut().zip(row) {
                                        *d += wij * gi;
                                    }
                                }
                            }
                        }
                        if self.rg(w) {
                            let xv = self.value(Var(x)).to_vec();
                            let dw = acc(&mut grads, w, g.len() * n);
                            for (r, &gi) in g.iter().enumerate() {
                                if gi != 0.0 {
                                    for (d, &xj) in dw[r * n..(r + 1) * n].iter_mut().zip(&xv) {
                                        *d += gi * xj;
                                    }
                                }
                            }
                        }
                    }
                }
                Op::Add(a, b) => {
                    if self.rg(*a) {
                        add_into(acc(&mut grads, *a, g.len()), &g);
                    }
                    if self.rg(*b) {
                        add_into(acc(&mut grads, *b, g.len()), &g);
                    }
                }
                Op::Sub(a, b) => {
                    if self.rg(*a) {
                        add_into(acc(&mut grads, *a, g.len()), &g);
                    }
                    if self.rg(*b) {
                        for (d, gi) in acc(&mut grads, *b, g.len()).iter_mut().zip(&g) {
                            *d -= gi;
                        }
                    }
                }
                Op::Mul(a, b) => {
                    let (a, b) = (*a, *b);
                    if self.rg(a) {
                        let bv = self.value(Var(b)).to_vec();
                        for ((d, gi), bi) in acc(&mut grads, a, g.len()).iter_mut().zip(&g).zip(&bv) {
                            *d += gi * bi;
                        }
                    }
                    if self.rg(b) {
                        let av = self.value(Var(a)).to_vec();
                        for ((d, gi), ai) in acc(&mut grads, b, g.len()).iter_mut().zip(&g).zip(&av) {
                            *d += gi * ai;
                        }
                    }
                }
                Op::Scale(x, c) => {
                    for (d, gi) in acc(&mut grads, *x, g.len()).iter_mut().zip(&g) {
                        *d += gi * c;
                    }
                }
                Op::Tanh(x) => {
                    for ((d, gi), y) in acc(&mut grads, *x, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        *d += gi * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(x) => {
                    for ((d, gi), y) in acc(&mut grads, *x, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        *d += gi * y * (1.0 - y);
                    }
                }
                Op::Relu(x) => {
                    for ((d, gi), y) in acc(&mut grads, *x, g.len()).iter_mut().zip(&g).zip(&node.value) {
                        if *y > 0.0 {
                            *d += gi;
                        }
                    }
                }
                Op::Slice { x, start } => {
                    let n = self.nodes[*x].shape.iter().product();
                    add_into(&mut acc(&mut grads, *x, n)[*start..*start + g.len()], &g);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n: usize = self.nodes[p].shape.iter().product();
                        if self.rg(p) {
                            add_into(acc(&mut grads, p, n), &g[off..off + n]);
                        }
                        off += n;
                    }
                }
                Op::Row { table, row } => {
                    let shape = &self.nodes[*table].shape;
                    let (rows, n) = (shape[0], shape[1]);
                    add_into(&mut acc(&mut grads, *table, rows * n)[row * n..(row + 1) * n], &g);
                }
                Op::LstmCell { gates, c_prev } => {
                    let h = g.len() / 2;
                    let a = &node.aux;
                    let (ig, fg, cg, og, tc) = (&a[..h], &a[h..2 * h], &a[2 * h..3 * h], &a[3 * h..4 * h], &a[4 * h..]);
                    let cp = self.value(Var(*c_prev)).to_vec();
                    let mut dgates = vec![0.0; 4 * h];
                    let mut dcp = vec![0.0; h];
                    for k in 0..h {
                        let gh = g[k];
                        let dc = g[h + k] + gh * og[k] * (1.0 - tc[k] * tc[k]);
                        let d_o = gh * tc[k];
                        let d_i = dc * cg[k];
                        let d_g = dc * ig[k];
                        let d_f = dc * cp[k];
                        dcp[k] = dc * fg[k];
                        dgates[k] = d_i * ig[k] * (1.0 - ig[k]);
                        dgates[h + k] = d_f * fg[k] * (1.0 - fg[k]);
                        dgates[2 * h + k] = d_g * (1.0 - cg[k] * cg[k]);
                        dgates[3 * h + k] = d_o * og[k] * (1.0 - og[k]);
                    }
                    if self.rg(*gates) {
                        add_into(acc(&mut grads, *gates, 4 * h), &dgates);
                    }
                    if self.rg(*c_prev) {
                        add_into(acc(&mut grads, *c_prev, h), &dcp);
                    }
                }
                Op::Sum(x) => {
                    let n = self.nodes[*x].shape.iter().product();
                    for d in acc(&mut grads, *x, n).iter_mut() {
                        *d += g[0];
                    }
                }
                Op::AddN(xs) => {
                    for &x in xs {
                        if self.rg(x) {
                            add_into(acc(&mut grads, x, g.len()), &g);
                        }
                    }
                }
                Op::Dot(a, b) => {
                    let (a, b) = (*a, *b);
                    let n = self.nodes[a].shape.iter().product();
                    if self.rg(a) {
                        let bv = self.value(Var(b)).to_vec();
                        for (d, bi) in acc(&mut grads, a, n).iter_mut().zip(&bv) {
                            *d += g[0] * bi;
                        }
                    }
                    if self.rg(b) {
                        let av = self.value(Var(a)).to_vec();
                        for (d, ai) in acc(&mut grads, b, n).iter_mut().zip(&av) {
                            *d += g[0] * ai;
                        }
                    }
                }
                Op::SquaredError { pred, target } => {
                    let (p, t) = (*pred, *target);
                    let n = self.nodes[p].shape.iter().product();
                    let diff: Vec<f64> =
                        self.value(Var(p)).iter().zip(self.value(Var(t))).map(|(a, b)| 2.0 * (a - b) * g[0]).collect();
                    if self.rg(p) {
                        add_into(acc(&mut grads, p, n), &diff);
                    }
                    if self.rg(t) {
                        for (d, v) in acc(&mut grads, t, n).iter_mut().zip(&diff) {
                            *d -= v;
                        }
                    }
                }
                Op::Distance { a, b } => {
                    let dist = node.value[0];
                    if dist > 0.0 {
                        let (a, b) = (*a, *b);
                        let n = self.nodes[a].shape.iter().product();
                        let unit: Vec<f64> = self
                            .value(Var(a))
                            .iter()
                            .zip(self.value(Var(b)))
                            .map(|(x, y)| (x - y) / dist * g[0])
                            .collect();
                        if self.rg(a) {
                            add_into(acc(&mut grads, a, n), &unit);
                        }
                        if self.rg(b) {
                            for (d, v) in acc(&mut grads, b, n).iter_mut().zip(&unit) {
                                *d -= v;
                            }
                        }
                    }
                }
                Op::SoftmaxXent { logits, target } => {
                    let n = node.aux.len();
                    let d = acc(&mut grads, *logits, n);
                    for (k, (dk, pk)) in d.iter_mut().zip(&node.aux).enumerate() {
                        let onehot = if k == *target { 1.0 } else { 0.0 };
                        *dk += g[0] * (pk - onehot);
                    }
                }
            }
        }

        let mut reached = vec![false; self.store.len()];
        let grads = param_grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| {
                let shape = self.store.tensor(ParamId(i)).shape().to_vec();
                match g {
                    Some(values) => {
                        reached[i] = true;
                        Tensor::new(shape, values).expect("gradient matches parameter shape")
                    }
                    None => Tensor::zeros(shape),
                }
            })
            .collect();
        Ok(Gradients { grads, reached })
    }
}

fn acc(grads: &mut [Vec<f64>], i: usize, n: usize) -> &mut Vec<f64> {
    let g = &mut grads[i];
    if g.is_empty() {
        *g = vec![0.0; n];
    }
    g
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Group;

    fn store_with(values: &[(&str, Vec<f64>)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, v) in values {
            s.register(*name, Group::Rae, Tensor::vector(v.clone())).unwrap();
        }
        s
    }

    #[test]
    fn sum_tanh_at_zero_has_unit_gradient() {
        let store = store_with(&[("x", vec![0.0; 5])]);
        let mut g = Graph::new(&store);
        let x = g.param(ParamId(0));
        let t = g.tanh(x);
        let loss = g.sum(t);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).values(), &[1.0; 5]);
    }

    #[test]
    fn dot_gradient_is_other_operand() {
        let store = store_with(&[("x", vec![1.0, -2.0, 3.0]), ("y", vec![0.5, 4.0, -1.5])]);
        let mut g = Graph::new(&store);
        let x = g.param(ParamId(0));
        let y = g.param(ParamId(1));
        let loss = g.dot(x, y);
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(ParamId(0)).values(), &[0.5, 4.0, -1.5]);
        assert_eq!(grads.get(ParamId(1)).values(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn unreached_parameters_get_zero_gradient() {
        let store = store_with(&[("x", vec![1.0, 2.0]), ("unused", vec![3.0, 4.0, 5.0])]);
        let mut g = Graph::new(&store);
        let x = g.param(ParamId(0));
        let loss = g.sum(x);
        let grads = g.backward(loss).unwrap();
        assert!(grads.reached(ParamId(0)));
        assert!(!grads.reached(ParamId(1)));
        assert_eq!(grads.get(ParamId(1)).values(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_is_a_usage_error() {
        let store = store_with(&[("x", vec![1.0, 2.0])]);
        let mut g = Graph::new(&store);
        let x = g.param(ParamId(0));
        let t = g.tanh(x);
        assert!(matches!(g.backward(t), Err(Error::Usage(_))));
    }

    #[test]
    fn backward_of_sum_is_sum_of_backwards() {
        let store = store_with(&[("x", vec![0.3, -0.7, 1.1])]);
        let build = |g: &mut Graph, which: u8| {
            let x = g.param(ParamId(0));
            let a = {
                let t = g.tanh(x);
                g.sum(t)
            };
            let b = {
                let s = g.sigmoid(x);
                g.dot(s, x)
            };
            match which {
                0 => a,
                1 => b,
                _ => g.add_n(&[a, b]),
            }
        };
        let grad = |which| {
            let mut g = Graph::new(&store);
            let l = build(&mut g, which);
            g.backward(l).unwrap().get(ParamId(0)).values().to_vec()
        };
        let (ga, gb, gs) = (grad(0), grad(1), grad(2));
        for k in 0..3 {
            assert!((ga[k] + gb[k] - gs[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let p = softmax(&[1000.0, 1000.0, -1000.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && p[2] >= 0.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
}
