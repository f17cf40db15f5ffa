//! Tape-based reverse-mode differentiation.
//!
//! Nodes are appended in evaluation order, so the tape itself is a
//! topological order and the backward pass is a single reverse sweep.
//! Parameter values are borrowed from a [`ParamStore`]; their gradients are
//! written into a caller-owned [`Gradients`] so several tapes can feed one
//! optimizer step.

use std::collections::HashMap;

use rand::Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{gemm_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    EmbedRow { param: ParamId, row: usize },
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddBroadcastCol(Var, Var),
    Sum(Vec<Var>),
    ConcatRows(Vec<Var>),
    Slice { src: Var, row: usize, col: usize },
    Transpose(Var),
    Tanh(Var),
    Sigmoid(Var),
    LogSumExpRows(Var),
    MaxPool { inputs: Vec<Var>, argmax: Vec<usize> },
    Reverse(Var),
    Dropout { src: Var, mask: Vec<f64> },
    LstmCell(Box<LstmCellCache>),
}

#[derive(Debug)]
struct LstmCellCache {
    w: Var,
    b: Var,
    x: Var,
    state: Option<Var>,
    /// `[x; h_prev]`
    xh: Vec<f64>,
    /// Activated gates `[i; f; o; g]`.
    gates: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    shape: (usize, usize),
    // `None` for parameters, whose value lives in the store
    value: Option<Tensor>,
    op: Op,
}

pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    param_vars: HashMap<ParamId, Var>,
}

impl Default for Graph<'static> {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph<'static> {
    /// A tape without parameters; only inputs are differentiable.
    pub fn new() -> Self {
        Graph {
            store: None,
            nodes: Vec::new(),
            grads: Vec::new(),
            param_vars: HashMap::new(),
        }
    }
}

impl<'p> Graph<'p> {
    pub fn with_params(store: &'p ParamStore) -> Self {
        Graph {
            store: Some(store),
            nodes: Vec::new(),
            grads: Vec::new(),
            param_vars: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node {
            shape: value.shape(),
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn store(&self) -> &'p ParamStore {
        self.store.expect("graph has no parameter store")
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store().value(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].shape
    }

    /// Gradient of the last backward seed with respect to `v`, if any
    /// gradient reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.input(Tensor::zeros(rows, cols))
    }

    /// The node for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        let shape = self.store().value(id).shape();
        self.nodes.push(Node {
            shape,
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    /// Row `row` of parameter matrix `id` as a column vector.
    pub fn embed_row(&mut self, id: ParamId, row: usize) -> Result<Var> {
        let table = self.store().value(id);
        if row >= table.rows() {
            return Err(Error::validation(format!(
                "index {row} out of range for table {} with {} rows",
                self.store().get(id).name,
                table.rows()
            )));
        }
        let value = Tensor::from_raw(table.cols(), 1, table.row_slice(row).to_vec());
        Ok(self.push(value, Op::EmbedRow { param: id, row }))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                left: (m, k),
                right: (k2, n),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(Tensor::from_raw(m, n, out), Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op,
                left: self.shape(a),
                right: self.shape(b),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::from_raw(r, c, data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let value = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(value, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s))
    }

    /// Adds column vector `v` (r x 1) to every column of `m` (r x c).
    pub fn add_broadcast_col(&mut self, m: Var, v: Var) -> Result<Var> {
        let (r, c) = self.shape(m);
        if self.shape(v) != (r, 1) {
            return Err(Error::Shape {
                op: "add_broadcast_col",
                left: (r, c),
                right: self.shape(v),
            });
        }
        let vv = self.value(v).data();
        let data = self
            .value(m)
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + vv[i / c])
            .collect();
        Ok(self.push(Tensor::from_raw(r, c, data), Op::AddBroadcastCol(m, v)))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn sum(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| Error::validation("sum of empty list"))?;
        let mut acc = self.value(first).clone();
        for &v in &vars[1..] {
            self.same_shape("sum", first, v)?;
            acc.add_assign(self.value(v));
        }
        Ok(self.push(acc, Op::Sum(vars.to_vec())))
    }

    /// Stacks nodes with equal column counts vertically.
    pub fn concat_rows(&mut self, vars: &[Var]) -> Result<Var> {
        let first = *vars
            .first()
            .ok_or_else(|| Error::validation("concat of empty list"))?;
        let cols = self.shape(first).1;
        let mut rows = 0;
        let mut data = Vec::new();
        for &v in vars {
            let (r, c) = self.shape(v);
            if c != cols {
                return Err(Error::Shape {
                    op: "concat_rows",
                    left: self.shape(first),
                    right: (r, c),
                });
            }
            rows += r;
            data.extend_from_slice(self.value(v).data());
        }
        Ok(self.push(Tensor::from_raw(rows, cols, data), Op::ConcatRows(vars.to_vec())))
    }

    /// Submatrix `[row, row + rows) x [col, col + cols)`.
    pub fn slice(&mut self, src: Var, row: usize, rows: usize, col: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.shape(src);
        if row + rows > r || col + cols > c || rows == 0 || cols == 0 {
            return Err(Error::Shape {
                op: "slice",
                left: (r, c),
                right: (row + rows, col + cols),
            });
        }
        let t = self.value(src);
        let mut data = Vec::with_capacity(rows * cols);
        for i in row..row + rows {
            data.extend_from_slice(&t.row_slice(i)[col..col + cols]);
        }
        Ok(self.push(Tensor::from_raw(rows, cols, data), Op::Slice { src, row, col }))
    }

    /// Scalar entry `(r, c)` as a `(1, 1)` node.
    pub fn pick(&mut self, src: Var, r: usize, c: usize) -> Result<Var> {
        self.slice(src, r, 1, c, 1)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    /// Row-wise `ln Σ exp`, giving an `(r, 1)` node. Each row is shifted by
    /// its maximum before exponentiation.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if c == 0 || r == 0 {
            return Err(Error::validation("logsumexp of empty tensor"));
        }
        let t = self.value(a);
        let data = (0..r).map(|i| logsumexp(t.row_slice(i))).collect();
        Ok(self.push(Tensor::from_raw(r, 1, data), Op::LogSumExpRows(a)))
    }

    /// Elementwise maximum over a sequence of equally shaped nodes. The
    /// gradient goes to the first position holding the maximum.
    pub fn max_pool_time(&mut self, inputs: &[Var]) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::validation("max pool over empty sequence"))?;
        for &v in &inputs[1..] {
            self.same_shape("max_pool_time", first, v)?;
        }
        let (r, c) = self.shape(first);
        let mut best = self.value(first).data().to_vec();
        let mut argmax = vec![0; best.len()];
        for (t, &v) in inputs.iter().enumerate().skip(1) {
            for (e, &x) in self.value(v).data().iter().enumerate() {
                if x > best[e] {
                    best[e] = x;
                    argmax[e] = t;
                }
            }
        }
        Ok(self.push(
            Tensor::from_raw(r, c, best),
            Op::MaxPool {
                inputs: inputs.to_vec(),
                argmax,
            },
        ))
    }

    /// Identity forward, negated gradient backward.
    pub fn grad_reverse(&mut self, a: Var) -> Var {
        let value = self.value(a).clone();
        self.push(value, Op::Reverse(a))
    }

    /// Inverted dropout: at training time each entry is zeroed with
    /// probability `p` and survivors are scaled by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::config(format!("dropout probability {p} not in [0, 1)")));
        }
        if !training || p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
            .collect();
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(&mask)
            .map(|(x, m)| x * m)
            .collect();
        Ok(self.push(Tensor::from_raw(r, c, data), Op::Dropout { src: a, mask }))
    }

    /// One LSTM step. `w` is `(4H, in + H)` over `[x; h]` with gate blocks
    /// `i, f, o, g`, `b` is `(4H, 1)` and `state` is the previous `[h; c]`
    /// (zero when absent). Returns the new `[h; c]` as a `(2H, 1)` node.
    pub fn lstm_cell(&mut self, w: Var, b: Var, x: Var, state: Option<Var>) -> Result<Var> {
        let (rows, cols) = self.shape(w);
        let in_dim = self.shape(x).0;
        if rows % 4 != 0 || self.shape(x).1 != 1 || cols <= in_dim {
            return Err(Error::Shape {
                op: "lstm_cell",
                left: (rows, cols),
                right: self.shape(x),
            });
        }
        let hd = rows / 4;
        if cols != in_dim + hd || self.shape(b) != (rows, 1) {
            return Err(Error::Shape {
                op: "lstm_cell",
                left: (rows, cols),
                right: self.shape(b),
            });
        }
        if let Some(s) = state {
            if self.shape(s) != (2 * hd, 1) {
                return Err(Error::Shape {
                    op: "lstm_cell state",
                    left: (2 * hd, 1),
                    right: self.shape(s),
                });
            }
        }
        let mut xh = Vec::with_capacity(cols);
        xh.extend_from_slice(self.value(x).data());
        let c_prev = match state {
            Some(s) => {
                let sv = self.value(s).data();
                xh.extend_from_slice(&sv[..hd]);
                sv[hd..].to_vec()
            }
            None => {
                xh.resize(cols, 0.0);
                vec![0.0; hd]
            }
        };
        let mut gates = self.value(b).data().to_vec();
        gemm_acc(self.value(w).data(), &xh, &mut gates, rows, cols, 1);
        for (k, z) in gates.iter_mut().enumerate() {
            *z = if k < 3 * hd { sigmoid(*z) } else { z.tanh() };
        }
        let mut out = vec![0.0; 2 * hd];
        let mut tanh_c = vec![0.0; hd];
        for j in 0..hd {
            let (i, f, o, g) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
            let c = f * c_prev[j] + i * g;
            tanh_c[j] = c.tanh();
            out[j] = o * tanh_c[j];
            out[hd + j] = c;
        }
        let cache = LstmCellCache {
            w,
            b,
            x,
            state,
            xh,
            gates,
            c_prev,
            tanh_c,
        };
        Ok(self.push(Tensor::from_raw(2 * hd, 1, out), Op::LstmCell(Box::new(cache))))
    }

    /// Backpropagates from a scalar `loss`. Node gradients and parameter
    /// gradients accumulate across calls.
    pub fn backward(&mut self, loss: Var, grads: &mut Gradients) -> Result<()> {
        self.backward_impl(loss, Some(grads))
    }

    /// Backward pass for tapes whose only leaves are inputs.
    pub fn backward_inputs(&mut self, loss: Var) -> Result<()> {
        self.backward_impl(loss, None)
    }

    fn backward_impl(&mut self, loss: Var, mut params: Option<&mut Gradients>) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape {
                op: "backward (loss must be scalar)",
                left: self.shape(loss),
                right: (1, 1),
            });
        }
        let mut local: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(Tensor::filled(1, 1, 1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            let gd = g.data();
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(id) => {
                    if let Some(p) = params.as_deref_mut() {
                        p.accumulate(*id, &g);
                    }
                }
                Op::EmbedRow { param, row } => {
                    if let Some(p) = params.as_deref_mut() {
                        let shape = self.store().value(*param).shape();
                        let slot = p.slot(*param, shape);
                        let dst = &mut slot.data_mut()[row * shape.1..(row + 1) * shape.1];
                        for (d, x) in dst.iter_mut().zip(gd) {
                            *d += x;
                        }
                    }
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let n = self.shape(*b).1;
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    if n == 1 {
                        self.acc(&mut local, *a, |da| {
                            for (r, &gr) in gd.iter().enumerate() {
                                if gr == 0.0 {
                                    continue;
                                }
                                for (d, &bv) in da[r * k..(r + 1) * k].iter_mut().zip(bv) {
                                    *d += gr * bv;
                                }
                            }
                        });
                        self.acc(&mut local, *b, |db| {
                            for (r, &gr) in gd.iter().enumerate() {
                                if gr == 0.0 {
                                    continue;
                                }
                                for (d, &av) in db.iter_mut().zip(&av[r * k..(r + 1) * k]) {
                                    *d += gr * av;
                                }
                            }
                        });
                        local[i] = Some(g);
                        continue;
                    }
                    // dA = g * B^T
                    self.acc(&mut local, *a, |da| {
                        for r in 0..m {
                            let g_row = &gd[r * n..(r + 1) * n];
                            for p in 0..k {
                                let b_row = &bv[p * n..(p + 1) * n];
                                da[r * k + p] +=
                                    g_row.iter().zip(b_row).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    });
                    // dB = A^T * g
                    self.acc(&mut local, *b, |db| {
                        for r in 0..m {
                            let g_row = &gd[r * n..(r + 1) * n];
                            for p in 0..k {
                                let a_rp = av[r * k + p];
                                if a_rp == 0.0 {
                                    continue;
                                }
                                for (d, x) in db[p * n..(p + 1) * n].iter_mut().zip(g_row) {
                                    *d += a_rp * x;
                                }
                            }
                        }
                    });
                }
                Op::Add(a, b) => {
                    self.acc(&mut local, *a, |d| add_into(d, gd));
                    self.acc(&mut local, *b, |d| add_into(d, gd));
                }
                Op::Sub(a, b) => {
                    self.acc(&mut local, *a, |d| add_into(d, gd));
                    self.acc(&mut local, *b, |d| {
                        d.iter_mut().zip(gd).for_each(|(d, x)| *d -= x)
                    });
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    self.acc(&mut local, *a, |d| {
                        for ((d, x), y) in d.iter_mut().zip(gd).zip(bv) {
                            *d += x * y;
                        }
                    });
                    self.acc(&mut local, *b, |d| {
                        for ((d, x), y) in d.iter_mut().zip(gd).zip(av) {
                            *d += x * y;
                        }
                    });
                }
                Op::Scale(a, s) => {
                    self.acc(&mut local, *a, |d| {
                        d.iter_mut().zip(gd).for_each(|(d, x)| *d += s * x)
                    });
                }
                Op::AddBroadcastCol(m, v) => {
                    let c = self.shape(*m).1;
                    self.acc(&mut local, *m, |d| add_into(d, gd));
                    self.acc(&mut local, *v, |d| {
                        for (r, d) in d.iter_mut().enumerate() {
                            *d += gd[r * c..(r + 1) * c].iter().sum::<f64>();
                        }
                    });
                }
                Op::Sum(vars) => {
                    for &v in vars {
                        self.acc(&mut local, v, |d| add_into(d, gd));
                    }
                }
                Op::ConcatRows(vars) => {
                    let mut offset = 0;
                    for &v in vars {
                        let len = self.value(v).len();
                        self.acc(&mut local, v, |d| add_into(d, &gd[offset..offset + len]));
                        offset += len;
                    }
                }
                Op::Slice { src, row, col } => {
                    let (rows, cols) = self.nodes[i].shape;
                    let src_cols = self.shape(*src).1;
                    self.acc(&mut local, *src, |d| {
                        for r in 0..rows {
                            let start = (row + r) * src_cols + col;
                            add_into(&mut d[start..start + cols], &gd[r * cols..(r + 1) * cols]);
                        }
                    });
                }
                Op::Transpose(a) => {
                    let gt = g.transpose();
                    self.acc(&mut local, *a, |d| add_into(d, gt.data()));
                }
                Op::Tanh(a) => {
                    let y = self.value(Var(i)).data();
                    self.acc(&mut local, *a, |d| {
                        for ((d, x), y) in d.iter_mut().zip(gd).zip(y) {
                            *d += x * (1.0 - y * y);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = self.value(Var(i)).data();
                    self.acc(&mut local, *a, |d| {
                        for ((d, x), y) in d.iter_mut().zip(gd).zip(y) {
                            *d += x * y * (1.0 - y);
                        }
                    });
                }
                Op::LogSumExpRows(a) => {
                    let out = self.value(Var(i)).data();
                    let input = self.value(*a);
                    let c = input.cols();
                    self.acc(&mut local, *a, |d| {
                        for (idx, d) in d.iter_mut().enumerate() {
                            let r = idx / c;
                            *d += gd[r] * (input.data()[idx] - out[r]).exp();
                        }
                    });
                }
                Op::MaxPool { inputs, argmax } => {
                    for (t, &v) in inputs.iter().enumerate() {
                        if !argmax.contains(&t) {
                            continue;
                        }
                        self.acc(&mut local, v, |d| {
                            for (e, &winner) in argmax.iter().enumerate() {
                                if winner == t {
                                    d[e] += gd[e];
                                }
                            }
                        });
                    }
                }
                Op::Reverse(a) => {
                    self.acc(&mut local, *a, |d| {
                        d.iter_mut().zip(gd).for_each(|(d, x)| *d -= x)
                    });
                }
                Op::Dropout { src, mask } => {
                    self.acc(&mut local, *src, |d| {
                        for ((d, x), m) in d.iter_mut().zip(gd).zip(mask) {
                            *d += x * m;
                        }
                    });
                }
                Op::LstmCell(cache) => {
                    let LstmCellCache {
                        w,
                        b,
                        x,
                        state,
                        xh,
                        gates,
                        c_prev,
                        tanh_c,
                    } = &**cache;
                    let hd = tanh_c.len();
                    let cols = xh.len();
                    let mut dz = vec![0.0; 4 * hd];
                    let mut dc_prev = vec![0.0; hd];
                    for j in 0..hd {
                        let (ig, fg, og, gg) = (gates[j], gates[hd + j], gates[2 * hd + j], gates[3 * hd + j]);
                        let dh = gd[j];
                        let tc = tanh_c[j];
                        let dc = gd[hd + j] + dh * og * (1.0 - tc * tc);
                        dz[j] = dc * gg * ig * (1.0 - ig);
                        dz[hd + j] = dc * c_prev[j] * fg * (1.0 - fg);
                        dz[2 * hd + j] = dh * tc * og * (1.0 - og);
                        dz[3 * hd + j] = dc * ig * (1.0 - gg * gg);
                        dc_prev[j] = dc * fg;
                    }
                    self.acc(&mut local, *b, |d| add_into(d, &dz));
                    self.acc(&mut local, *w, |d| {
                        for (r, &z) in dz.iter().enumerate() {
                            if z == 0.0 {
                                continue;
                            }
                            for (d, &v) in d[r * cols..(r + 1) * cols].iter_mut().zip(xh) {
                                *d += z * v;
                            }
                        }
                    });
                    let wv = self.value(*w).data();
                    let mut dxh = vec![0.0; cols];
                    for (r, &z) in dz.iter().enumerate() {
                        if z == 0.0 {
                            continue;
                        }
                        for (d, &v) in dxh.iter_mut().zip(&wv[r * cols..(r + 1) * cols]) {
                            *d += z * v;
                        }
                    }
                    let in_dim = cols - hd;
                    self.acc(&mut local, *x, |d| add_into(d, &dxh[..in_dim]));
                    if let Some(s) = state {
                        self.acc(&mut local, *s, |d| {
                            add_into(&mut d[..hd], &dxh[in_dim..]);
                            add_into(&mut d[hd..], &dc_prev);
                        });
                    }
                }
            }
            local[i] = Some(g);
        }

        if self.grads.len() < local.len() {
            self.grads.resize(local.len(), None);
        }
        for (dst, src) in self.grads.iter_mut().zip(local) {
            if let Some(src) = src {
                match dst {
                    Some(d) => d.add_assign(&src),
                    None => *dst = Some(src),
                }
            }
        }
        Ok(())
    }

    fn acc(&self, local: &mut [Option<Tensor>], v: Var, f: impl FnOnce(&mut [f64])) {
        let (r, c) = self.nodes[v.0].shape;
        let slot = local[v.0].get_or_insert_with(|| Tensor::zeros(r, c));
        f(slot.data_mut());
    }

    pub fn zero_grads(&mut self) {
        self.grads.clear();
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable `ln Σ exp(x)` of a non-empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}
