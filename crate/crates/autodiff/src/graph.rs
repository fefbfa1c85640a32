//! Tape of recorded operations and the reverse sweep over it.
//!
//! Every operation appends one node whose value is computed eagerly. Node
//! indices are therefore already in topological order and `backward` simply
//! walks the tape from the loss towards the leaves.

use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Value {
    Owned(Tensor),
    Param(ParamId),
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulScalar(Var, Var),
    Recip(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Stack(Vec<Var>),
    Slice(Var, usize),
    Row(Var, usize),
    Transpose(Var),
    Embedding(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    MeanRows(Var),
    Dot(Var, Var),
    Pick(Var, usize),
    ScatterAdd(Var, Vec<usize>),
    Clamp(Var, f64, f64),
}

struct Node {
    value: Value,
    op: Op,
    requires_grad: bool,
}

/// A single-threaded tape bound to a parameter store.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Result of [`Graph::backward`].
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<Option<Var>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if any flowed there.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.nodes.get(var.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params
            .get(id.0)
            .copied()
            .flatten()
            .and_then(|v| self.wrt(v))
    }

    /// Adds every parameter gradient into `acc`, indexed by `ParamId`.
    pub fn accumulate_into(&self, acc: &mut [Tensor]) {
        for (i, slot) in acc.iter_mut().enumerate() {
            if let Some(g) = self.param(ParamId(i)) {
                slot.add_assign(g);
            }
        }
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> AutodiffError {
    AutodiffError::InvalidArgument {
        op,
        msg: msg.into(),
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `a[m,k] * b[k,n]`
fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    if n == 1 {
        return a.chunks_exact(k).map(|row| row.iter().zip(b).map(|(x, y)| x * y).sum()).collect();
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn softmax_rows(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for r in 0..rows {
        let src = &data[r * cols..(r + 1) * cols];
        let dst = &mut out[r * cols..(r + 1) * cols];
        let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        match &self.nodes[var.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.get(*id),
        }
    }

    fn push(&mut self, op: &'static str, value: Tensor, node_op: Op, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(AutodiffError::NonFinite { op });
        }
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: node_op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Trainable parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: Value::Param(id),
            op: Op::Leaf,
            requires_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// Differentiable leaf that is not a stored parameter.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Value::Owned(value),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Matrix product. Rank-1 left operands act as a row vector and rank-1
    /// right operands as a column vector; the result drops that axis again.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n, shape) = match (ta.shape(), tb.shape()) {
            ([m, k], [k2, n]) if k == k2 => (*m, *k, *n, vec![*m, *n]),
            ([m, k], [k2]) if k == k2 => (*m, *k, 1, vec![*m]),
            ([k], [k2, n]) if k == k2 => (1, *k, *n, vec![*n]),
            _ => return Err(mismatch("matmul", ta, tb)),
        };
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let rg = self.rg(a) || self.rg(b);
        self.push("matmul", Tensor::new(shape, out)?, Op::MatMul(a, b), rg)
    }

    fn zip_same(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, node: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(op, out, node, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds vector `v[c]` to every row of `m[r,c]`.
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (tm, tv) = (self.value(m), self.value(v));
        let (r, c) = match (tm.shape(), tv.shape()) {
            ([r, c], [c2]) if c == c2 => (*r, *c),
            _ => return Err(mismatch("add_row", tm, tv)),
        };
        let mut data = tm.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                data[i * c + j] += tv.data()[j];
            }
        }
        let rg = self.rg(m) || self.rg(v);
        self.push("add_row", Tensor::new(vec![r, c], data)?, Op::AddRow(m, v), rg)
    }

    fn map(&mut self, op: &'static str, a: Var, f: impl Fn(f64) -> f64, node: Op) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| f(*x)).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a);
        self.push(op, out, node, rg)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("scale", a, |x| x * c, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map("add_scalar", a, |x| x + c, Op::AddScalar(a))
    }

    /// `1 - a`, elementwise.
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        let neg = self.scale(a, -1.0)?;
        self.add_scalar(neg, 1.0)
    }

    /// Multiplies every element of `a` by the one-element tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ta, ts) = (self.value(a), self.value(s));
        if ts.len() != 1 {
            return Err(mismatch("mul_scalar", ta, ts));
        }
        let c = ts.item();
        let data = ta.data().iter().map(|x| x * c).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(s);
        self.push("mul_scalar", out, Op::MulScalar(a, s), rg)
    }

    pub fn recip(&mut self, a: Var) -> Result<Var> {
        if self.value(a).data().iter().any(|x| *x == 0.0) {
            return Err(invalid("recip", "division by zero"));
        }
        self.map("recip", a, |x| 1.0 / x, Op::Recip(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map("exp", a, f64::exp, Op::Exp(a))
    }

    /// Natural log; non-positive inputs surface as a non-finite error.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.map("log", a, f64::ln, Op::Log(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.map("clamp", a, |x| x.clamp(lo, hi), Op::Clamp(a, lo, hi))
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let (r, c) = ta.dims2();
        if c == 0 {
            return Err(invalid("softmax", "empty axis"));
        }
        let out = Tensor::new(ta.shape().to_vec(), softmax_rows(ta.data(), r, c))?;
        let rg = self.rg(a);
        self.push("softmax", out, Op::Softmax(a), rg)
    }

    /// Concatenation along the last axis. Vectors join end to end; matrices
    /// must share their row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(invalid("concat", "no inputs"));
        }
        let first = self.value(parts[0]);
        let rank = first.rank();
        let rows = first.dims2().0;
        let mut cols = Vec::with_capacity(parts.len());
        for p in parts {
            let t = self.value(*p);
            if t.rank() != rank || t.dims2().0 != rows {
                return Err(mismatch("concat", first, t));
            }
            cols.push(t.dims2().1);
        }
        let total: usize = cols.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let shape = if rank == 1 { vec![total] } else { vec![rows, total] };
        let rg = parts.iter().any(|p| self.rg(*p));
        self.push("concat", Tensor::new(shape, data)?, Op::Concat(parts.to_vec()), rg)
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(invalid("stack", "no inputs"));
        }
        let first = self.value(rows[0]);
        let n = first.len();
        let mut data = Vec::with_capacity(rows.len() * n);
        for r in rows {
            let t = self.value(*r);
            if t.rank() != 1 || t.len() != n {
                return Err(mismatch("stack", first, t));
            }
            data.extend_from_slice(t.data());
        }
        let rg = rows.iter().any(|r| self.rg(*r));
        self.push("stack", Tensor::new(vec![rows.len(), n], data)?, Op::Stack(rows.to_vec()), rg)
    }

    /// Contiguous sub-vector `a[start..start + len]`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 1 || start + len > ta.len() || len == 0 {
            return Err(invalid(
                "slice",
                format!("range {start}..{} out of bounds for shape {:?}", start + len, ta.shape()),
            ));
        }
        let data = ta.data()[start..start + len].to_vec();
        let rg = self.rg(a);
        self.push("slice", Tensor::vector(data), Op::Slice(a, start), rg)
    }

    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let tm = self.value(m);
        if tm.rank() != 2 || i >= tm.dims2().0 {
            return Err(invalid("row", format!("row {i} out of bounds for shape {:?}", tm.shape())));
        }
        let data = tm.row(i).to_vec();
        let rg = self.rg(m);
        self.push("row", Tensor::vector(data), Op::Row(m, i), rg)
    }

    pub fn transpose(&mut self, m: Var) -> Result<Var> {
        let tm = self.value(m);
        if tm.rank() != 2 {
            return Err(invalid("transpose", format!("expected a matrix, got {:?}", tm.shape())));
        }
        let (r, c) = tm.dims2();
        let mut data = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = tm.data()[i * c + j];
            }
        }
        let rg = self.rg(m);
        self.push("transpose", Tensor::new(vec![c, r], data)?, Op::Transpose(m), rg)
    }

    /// Rows of `table` selected by `ids`, as an `[ids.len(), cols]` matrix.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tt = self.value(table);
        if tt.rank() != 2 || ids.is_empty() {
            return Err(invalid("embedding", format!("table shape {:?}, {} ids", tt.shape(), ids.len())));
        }
        let (rows, cols) = tt.dims2();
        let mut data = Vec::with_capacity(ids.len() * cols);
        for &id in ids {
            if id >= rows {
                return Err(invalid("embedding", format!("id {id} out of range for {rows} rows")));
            }
            data.extend_from_slice(tt.row(id));
        }
        let rg = self.rg(table);
        self.push(
            "embedding",
            Tensor::new(vec![ids.len(), cols], data)?,
            Op::Embedding(table, ids.to_vec()),
            rg,
        )
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push("sum", Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let s = ta.data().iter().sum::<f64>() / ta.len() as f64;
        let rg = self.rg(a);
        self.push("mean", Tensor::scalar(s), Op::Mean(a), rg)
    }

    /// Column means of a matrix.
    pub fn mean_rows(&mut self, m: Var) -> Result<Var> {
        let tm = self.value(m);
        if tm.rank() != 2 {
            return Err(invalid("mean_rows", format!("expected a matrix, got {:?}", tm.shape())));
        }
        let (r, c) = tm.dims2();
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (d, v) in data.iter_mut().zip(tm.row(i)) {
                *d += v;
            }
        }
        for d in data.iter_mut() {
            *d /= r as f64;
        }
        let rg = self.rg(m);
        self.push("mean_rows", Tensor::vector(data), Op::MeanRows(m), rg)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 1 || ta.shape() != tb.shape() {
            return Err(mismatch("dot", ta, tb));
        }
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let rg = self.rg(a) || self.rg(b);
        self.push("dot", Tensor::scalar(s), Op::Dot(a, b), rg)
    }

    /// Element `i` of a vector as a one-element tensor.
    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 1 || i >= ta.len() {
            return Err(invalid("pick", format!("index {i} out of bounds for shape {:?}", ta.shape())));
        }
        let v = ta.data()[i];
        let rg = self.rg(a);
        self.push("pick", Tensor::scalar(v), Op::Pick(a, i), rg)
    }

    /// `out[index[i]] += a[i]` into a zero vector of length `len`.
    pub fn scatter_add(&mut self, a: Var, index: &[usize], len: usize) -> Result<Var> {
        let ta = self.value(a);
        if ta.rank() != 1 || ta.len() != index.len() {
            return Err(invalid(
                "scatter_add",
                format!("{} indices for shape {:?}", index.len(), ta.shape()),
            ));
        }
        let mut data = vec![0.0; len];
        for (v, &i) in ta.data().iter().zip(index) {
            if i >= len {
                return Err(invalid("scatter_add", format!("index {i} out of bounds for length {len}")));
            }
            data[i] += v;
        }
        let rg = self.rg(a);
        self.push("scatter_add", Tensor::vector(data), Op::ScatterAdd(a, index.to_vec()), rg)
    }

    /// Reverse sweep from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for idx in (0..=loss.0).rev() {
            let Some(gout) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(idx, &gout, &mut grads)?;
            }
            grads[idx] = Some(gout);
        }
        Ok(Gradients {
            nodes: grads,
            params: self.param_vars.clone(),
        })
    }

    /// Gradient buffer of `var`, created as zeros on first use; `None` when
    /// no gradient is needed there.
    fn slot<'g>(&self, grads: &'g mut [Option<Tensor>], var: Var) -> Option<&'g mut [f64]> {
        if !self.rg(var) {
            return None;
        }
        let t = grads[var.0].get_or_insert_with(|| Tensor::zeros(self.value(var).shape()));
        Some(t.data_mut())
    }

    /// `d[i] += f(i)` over the gradient of `var`.
    fn add_each(&self, grads: &mut [Option<Tensor>], var: Var, f: impl Fn(usize) -> f64) {
        if let Some(d) = self.slot(grads, var) {
            for (i, x) in d.iter_mut().enumerate() {
                *x += f(i);
            }
        }
    }

    fn propagate(&self, idx: usize, gout: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let out = self.value(Var(idx));
        let g = gout.data();
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = match ta.shape() {
                    [m, k] => (*m, *k),
                    [k] => (1, *k),
                    _ => unreachable!(),
                };
                let n = match tb.shape() {
                    [_, n] => *n,
                    _ => 1,
                };
                let (ad, bd) = (ta.data(), tb.data());
                if let Some(da) = self.slot(grads, *a) {
                    // dA[i,p] += sum_j g[i,j] * B[p,j]
                    if n == 1 {
                        for i in 0..m {
                            let gi = g[i];
                            if gi != 0.0 {
                                for (d, bv) in da[i * k..(i + 1) * k].iter_mut().zip(bd) {
                                    *d += gi * bv;
                                }
                            }
                        }
                    } else {
                        for i in 0..m {
                            let grow = &g[i * n..(i + 1) * n];
                            for p in 0..k {
                                let brow = &bd[p * n..(p + 1) * n];
                                da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                            }
                        }
                    }
                }
                if let Some(db) = self.slot(grads, *b) {
                    // dB[p,j] += sum_i A[i,p] * g[i,j]
                    if n == 1 {
                        for (arow, gi) in ad.chunks_exact(k).zip(g) {
                            if *gi != 0.0 {
                                for (d, av) in db.iter_mut().zip(arow) {
                                    *d += av * gi;
                                }
                            }
                        }
                        return Ok(());
                    }
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = ad[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *d += av * gv;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                self.add_each(grads, *a, |i| g[i]);
                self.add_each(grads, *b, |i| g[i]);
            }
            Op::Sub(a, b) => {
                self.add_each(grads, *a, |i| g[i]);
                self.add_each(grads, *b, |i| -g[i]);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                self.add_each(grads, *a, |i| g[i] * tb[i]);
                self.add_each(grads, *b, |i| g[i] * ta[i]);
            }
            Op::AddRow(m, v) => {
                self.add_each(grads, *m, |i| g[i]);
                if let Some(dv) = self.slot(grads, *v) {
                    let c = dv.len();
                    for row in g.chunks(c) {
                        for (d, x) in dv.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                }
            }
            Op::Scale(a, c) => self.add_each(grads, *a, |i| g[i] * c),
            Op::AddScalar(a) => self.add_each(grads, *a, |i| g[i]),
            Op::MulScalar(a, s) => {
                let (ta, c) = (self.value(*a).data(), self.value(*s).item());
                self.add_each(grads, *a, |i| g[i] * c);
                if let Some(ds) = self.slot(grads, *s) {
                    ds[0] += g.iter().zip(ta).map(|(x, y)| x * y).sum::<f64>();
                }
            }
            Op::Recip(a) => {
                let y = out.data();
                self.add_each(grads, *a, |i| -g[i] * y[i] * y[i]);
            }
            Op::Sigmoid(a) => {
                let y = out.data();
                self.add_each(grads, *a, |i| g[i] * y[i] * (1.0 - y[i]));
            }
            Op::Tanh(a) => {
                let y = out.data();
                self.add_each(grads, *a, |i| g[i] * (1.0 - y[i] * y[i]));
            }
            Op::Exp(a) => {
                let y = out.data();
                self.add_each(grads, *a, |i| g[i] * y[i]);
            }
            Op::Log(a) => {
                let x = self.value(*a).data();
                self.add_each(grads, *a, |i| g[i] / x[i]);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                self.add_each(grads, *a, |i| if x[i] < *lo || x[i] > *hi { 0.0 } else { g[i] });
            }
            Op::Softmax(a) => {
                if let Some(d) = self.slot(grads, *a) {
                    let c = out.dims2().1;
                    for ((dr, y), gy) in d.chunks_mut(c).zip(out.data().chunks(c)).zip(g.chunks(c)) {
                        let inner: f64 = y.iter().zip(gy).map(|(p, q)| p * q).sum();
                        for j in 0..c {
                            dr[j] += y[j] * (gy[j] - inner);
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let (rows, total) = out.dims2();
                let mut offset = 0;
                for p in parts {
                    let c = self.value(*p).dims2().1;
                    if let Some(d) = self.slot(grads, *p) {
                        for r in 0..rows {
                            let src = &g[r * total + offset..r * total + offset + c];
                            for (x, y) in d[r * c..(r + 1) * c].iter_mut().zip(src) {
                                *x += y;
                            }
                        }
                    }
                    offset += c;
                }
            }
            Op::Stack(rows) => {
                let n = out.dims2().1;
                for (i, r) in rows.iter().enumerate() {
                    let src = &g[i * n..(i + 1) * n];
                    self.add_each(grads, *r, |j| src[j]);
                }
            }
            Op::Slice(a, start) => {
                if let Some(d) = self.slot(grads, *a) {
                    for (x, y) in d[*start..*start + g.len()].iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            Op::Row(m, i) => {
                if let Some(d) = self.slot(grads, *m) {
                    let c = g.len();
                    for (x, y) in d[i * c..(i + 1) * c].iter_mut().zip(g) {
                        *x += y;
                    }
                }
            }
            Op::Transpose(m) => {
                let (r, c) = out.dims2();
                self.add_each(grads, *m, |idx| {
                    // element (j, i) of the input is element (i, j) of the output
                    let (j, i) = (idx / r, idx % r);
                    g[i * c + j]
                });
            }
            Op::Embedding(table, ids) => {
                if let Some(d) = self.slot(grads, *table) {
                    let c = g.len() / ids.len();
                    for (k, &id) in ids.iter().enumerate() {
                        for (x, y) in d[id * c..(id + 1) * c].iter_mut().zip(&g[k * c..(k + 1) * c]) {
                            *x += y;
                        }
                    }
                }
            }
            Op::Sum(a) => self.add_each(grads, *a, |_| g[0]),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                self.add_each(grads, *a, |_| g[0] / n);
            }
            Op::MeanRows(m) => {
                let (r, c) = self.value(*m).dims2();
                self.add_each(grads, *m, |idx| g[idx % c] / r as f64);
            }
            Op::Dot(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                self.add_each(grads, *a, |i| tb[i] * g[0]);
                self.add_each(grads, *b, |i| ta[i] * g[0]);
            }
            Op::Pick(a, i) => {
                if let Some(d) = self.slot(grads, *a) {
                    d[*i] += g[0];
                }
            }
            Op::ScatterAdd(a, index) => self.add_each(grads, *a, |i| g[index[i]]),
        }
        Ok(())
    }
}
