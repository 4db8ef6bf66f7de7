use std::cell::RefCell;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::{axpy, dot};
use super::{AdError, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value {
    Owned(Tensor),
    Param(ParamId),
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatVec(Var, Var),
    VecMat(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    LogSigmoid(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Embedding(Var, usize),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Stack(Vec<Var>),
    MaxOverTime(Var, Vec<usize>),
    Sum(Var),
    Mean(Var),
    SumN(Vec<Var>),
    Pick(Var, usize),
    Dot(Var, Var),
}

struct Node {
    value: Value,
    op: Op,
}

static EMPTY_STORE: ParamStore = ParamStore::empty();

/// A tape of recorded operations over borrowed parameters.
///
/// Operations are methods taking `&self`, so expressions nest naturally.
/// Shapes: scalars are `[]`, vectors `[n]`, matrices `[rows, cols]`.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: RefCell<Vec<Node>>,
    param_vars: RefCell<Vec<Option<Var>>>,
}

/// Result of a backward pass: gradients of leaves and of parameters.
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: ParamGrads,
}

impl Gradients {
    /// Gradient with respect to a leaf or parameter node.
    pub fn of(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(Option::as_ref)
    }

    pub fn params(&self) -> &ParamGrads {
        &self.params
    }

    pub fn into_params(self) -> ParamGrads {
        self.params
    }
}

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> AdError {
    AdError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn bad_shape(op: &'static str, expected: &'static str, t: &Tensor) -> AdError {
    AdError::BadShape {
        op,
        expected,
        got: t.shape().to_vec(),
    }
}

fn softmax_in_place(x: &mut [f64]) {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        z += *v;
    }
    x.iter_mut().for_each(|v| *v /= z);
}

fn log_softmax_vec(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + x.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

fn log_sigmoid(x: f64) -> f64 {
    -((-x).max(0.0) + (-x.abs()).exp().ln_1p())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: RefCell::new(Vec::with_capacity(1024)),
            param_vars: RefCell::new(vec![None; params.len()]),
        }
    }

    /// A graph with no parameters, for computations over inputs only.
    pub fn detached() -> Graph<'static> {
        Graph::new(&EMPTY_STORE)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn store(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&self, value: Tensor, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Value::Owned(value),
            op,
        });
        Var(nodes.len() - 1)
    }

    fn val<'a>(&'a self, nodes: &'a [Node], v: Var) -> &'a Tensor {
        match &nodes[v.0].value {
            Value::Owned(t) => t,
            Value::Param(id) => self.params.value(*id),
        }
    }

    /// The node for parameter `id`; repeated calls return the same node.
    pub fn param(&self, id: ParamId) -> Var {
        if let Some(Some(v)) = self.param_vars.borrow().get(id.0) {
            return *v;
        }
        let v = {
            let mut nodes = self.nodes.borrow_mut();
            nodes.push(Node {
                value: Value::Param(id),
                op: Op::Param(id),
            });
            Var(nodes.len() - 1)
        };
        let mut pv = self.param_vars.borrow_mut();
        if pv.len() <= id.0 {
            pv.resize(id.0 + 1, None);
        }
        pv[id.0] = Some(v);
        v
    }

    /// An input node. Its gradient is available after backward.
    pub fn input(&self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn constant(&self, t: Tensor) -> Var {
        self.input(t)
    }

    pub fn scalar(&self, x: f64) -> Var {
        self.input(Tensor::scalar(x))
    }

    pub fn value(&self, v: Var) -> Tensor {
        let nodes = self.nodes.borrow();
        self.val(&nodes, v).clone()
    }

    pub fn with_value<R>(&self, v: Var, f: impl FnOnce(&Tensor) -> R) -> R {
        let nodes = self.nodes.borrow();
        f(self.val(&nodes, v))
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.with_value(v, Tensor::item)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.with_value(v, |t| t.shape().to_vec())
    }

    fn unary(&self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.with_value(x, |t| t.map(f));
        self.push(out, op)
    }

    fn binary_same(&self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (self.val(&nodes, a), self.val(&nodes, b));
            if ta.shape() != tb.shape() {
                return Err(shape_err(name, ta, tb));
            }
            let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(ta.shape().to_vec(), data)?
        };
        Ok(self.push(out, op))
    }

    /// Matrix product. `[m,k]·[k,n]`, `[m,k]·[k]` (matrix-vector) and
    /// `[n]·[n,c]` (vector-matrix) are supported.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (out, op) = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (self.val(&nodes, a), self.val(&nodes, b));
            match (ta.ndim(), tb.ndim()) {
                (2, 2) => (ta.matmul(tb)?, Op::MatMul(a, b)),
                (2, 1) => {
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    if k != tb.len() {
                        return Err(shape_err("matmul", ta, tb));
                    }
                    let x = tb.data();
                    let data = (0..m).map(|i| dot(&ta.data()[i * k..(i + 1) * k], x)).collect();
                    (Tensor::vector(data), Op::MatVec(a, b))
                }
                (1, 2) => {
                    let (n, c) = (tb.shape()[0], tb.shape()[1]);
                    if n != ta.len() {
                        return Err(shape_err("matmul", ta, tb));
                    }
                    let mut data = vec![0.0; c];
                    for (i, &xi) in ta.data().iter().enumerate() {
                        axpy(xi, tb.row(i), &mut data);
                    }
                    (Tensor::vector(data), Op::VecMat(a, b))
                }
                _ => return Err(shape_err("matmul", ta, tb)),
            }
        };
        Ok(self.push(out, op))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary_same(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&self, x: Var, c: f64) -> Var {
        self.unary(x, |v| v * c, Op::Scale(x, c))
    }

    /// Adds vector `v` to every row of matrix `m`.
    pub fn add_row(&self, m: Var, v: Var) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let (tm, tv) = (self.val(&nodes, m), self.val(&nodes, v));
            if tm.ndim() != 2 || tv.ndim() != 1 || tm.shape()[1] != tv.len() {
                return Err(shape_err("add_row", tm, tv));
            }
            let mut out = tm.clone();
            for r in 0..tm.shape()[0] {
                axpy(1.0, tv.data(), out.row_mut(r));
            }
            out
        };
        Ok(self.push(out, Op::AddRow(m, v)))
    }

    pub fn tanh(&self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    /// `log(sigmoid(x))`, computed without overflow.
    pub fn log_sigmoid(&self, x: Var) -> Var {
        self.unary(x, log_sigmoid, Op::LogSigmoid(x))
    }

    pub fn softmax(&self, x: Var) -> Result<Var> {
        let out = self.with_value(x, |t| {
            if t.ndim() != 1 {
                return Err(bad_shape("softmax", "a vector", t));
            }
            let mut d = t.data().to_vec();
            softmax_in_place(&mut d);
            Ok(Tensor::vector(d))
        })?;
        Ok(self.push(out, Op::Softmax(x)))
    }

    pub fn log_softmax(&self, x: Var) -> Result<Var> {
        let out = self.with_value(x, |t| {
            if t.ndim() != 1 {
                return Err(bad_shape("log_softmax", "a vector", t));
            }
            Ok(Tensor::vector(log_softmax_vec(t.data())))
        })?;
        Ok(self.push(out, Op::LogSoftmax(x)))
    }

    /// Row `id` of an embedding table `[V, d]`.
    pub fn embedding(&self, table: Var, id: usize) -> Result<Var> {
        let out = self.with_value(table, |t| {
            if t.ndim() != 2 {
                return Err(bad_shape("embedding", "a matrix", t));
            }
            if id >= t.shape()[0] {
                return Err(AdError::OutOfRange {
                    op: "embedding",
                    index: id,
                    size: t.shape()[0],
                });
            }
            Ok(Tensor::vector(t.row(id).to_vec()))
        })?;
        Ok(self.push(out, Op::Embedding(table, id)))
    }

    /// Concatenates vectors.
    pub fn concat(&self, xs: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let mut data = Vec::new();
            for &x in xs {
                let t = self.val(&nodes, x);
                if t.ndim() != 1 {
                    return Err(bad_shape("concat", "vectors", t));
                }
                data.extend_from_slice(t.data());
            }
            Tensor::vector(data)
        };
        Ok(self.push(out, Op::Concat(xs.to_vec())))
    }

    /// `x[start..start+len]` of a vector.
    pub fn slice(&self, x: Var, start: usize, len: usize) -> Result<Var> {
        let out = self.with_value(x, |t| {
            if t.ndim() != 1 {
                return Err(bad_shape("slice", "a vector", t));
            }
            if start + len > t.len() {
                return Err(AdError::OutOfRange {
                    op: "slice",
                    index: start + len,
                    size: t.len(),
                });
            }
            Ok(Tensor::vector(t.data()[start..start + len].to_vec()))
        })?;
        Ok(self.push(out, Op::Slice(x, start)))
    }

    /// Stacks equal-length vectors as the rows of a matrix.
    pub fn stack(&self, xs: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let first = self.val(&nodes, xs[0]);
            let c = first.len();
            let mut data = Vec::with_capacity(c * xs.len());
            for &x in xs {
                let t = self.val(&nodes, x);
                if t.ndim() != 1 || t.len() != c {
                    return Err(shape_err("stack", first, t));
                }
                data.extend_from_slice(t.data());
            }
            Tensor::matrix(xs.len(), c, data)?
        };
        Ok(self.push(out, Op::Stack(xs.to_vec())))
    }

    /// Per-column maximum of a `[length, d]` matrix, giving `[d]`.
    pub fn max_over_time(&self, m: Var) -> Result<Var> {
        let (out, argmax) = self.with_value(m, |t| {
            if t.ndim() != 2 || t.shape()[0] == 0 {
                return Err(bad_shape("max_over_time", "a non-empty matrix", t));
            }
            let (n, d) = (t.shape()[0], t.shape()[1]);
            let mut best = t.row(0).to_vec();
            let mut arg = vec![0usize; d];
            for r in 1..n {
                for (j, &v) in t.row(r).iter().enumerate() {
                    if v > best[j] {
                        best[j] = v;
                        arg[j] = r;
                    }
                }
            }
            Ok((Tensor::vector(best), arg))
        })?;
        Ok(self.push(out, Op::MaxOverTime(m, argmax)))
    }

    pub fn sum(&self, x: Var) -> Var {
        let s = self.with_value(x, |t| t.data().iter().sum());
        self.push(Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&self, x: Var) -> Var {
        let s = self.with_value(x, |t| t.data().iter().sum::<f64>() / t.len() as f64);
        self.push(Tensor::scalar(s), Op::Mean(x))
    }

    /// Sum of equally shaped nodes.
    pub fn add_n(&self, xs: &[Var]) -> Result<Var> {
        let out = {
            let nodes = self.nodes.borrow();
            let mut acc = self.val(&nodes, xs[0]).clone();
            for &x in &xs[1..] {
                let t = self.val(&nodes, x);
                if t.shape() != acc.shape() {
                    return Err(shape_err("add_n", &acc, t));
                }
                acc.add_assign(t);
            }
            acc
        };
        Ok(self.push(out, Op::SumN(xs.to_vec())))
    }

    /// Element `i` of a vector, as a scalar.
    pub fn pick(&self, x: Var, i: usize) -> Result<Var> {
        let v = self.with_value(x, |t| {
            t.data().get(i).copied().ok_or(AdError::OutOfRange {
                op: "pick",
                index: i,
                size: t.len(),
            })
        })?;
        Ok(self.push(Tensor::scalar(v), Op::Pick(x, i)))
    }

    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let v = {
            let nodes = self.nodes.borrow();
            let (ta, tb) = (self.val(&nodes, a), self.val(&nodes, b));
            if ta.len() != tb.len() {
                return Err(shape_err("dot", ta, tb));
            }
            dot(ta.data(), tb.data())
        };
        Ok(self.push(Tensor::scalar(v), Op::Dot(a, b)))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        let loss_val = self.val(&nodes, loss);
        if loss_val.len() != 1 {
            return Err(AdError::NonScalarLoss(loss_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; nodes.len()];
        let mut params = ParamGrads::new(self.params.len());
        grads[loss.0] = Some(Tensor::full(loss_val.shape(), 1.0));

        fn slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut Tensor {
            grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
        }

        for k in (0..=loss.0).rev() {
            let Some(g) = grads[k].take() else { continue };
            let out = self.val(&nodes, Var(k));
            let v = |x: Var| self.val(&nodes, x);
            match &nodes[k].op {
                Op::Leaf => {
                    grads[k] = Some(g);
                }
                Op::Param(id) => {
                    params.set(*id, g.clone());
                    grads[k] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (v(*a), v(*b));
                    let (m, kk, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let ga = slot(&mut grads, *a, ta.shape());
                    for i in 0..m {
                        for p in 0..kk {
                            ga.data_mut()[i * kk + p] += dot(&g.data()[i * n..(i + 1) * n], tb.row(p));
                        }
                    }
                    let gb = slot(&mut grads, *b, tb.shape());
                    for i in 0..m {
                        for p in 0..kk {
                            let aip = ta.data()[i * kk + p];
                            axpy(aip, &g.data()[i * n..(i + 1) * n], &mut gb.data_mut()[p * n..(p + 1) * n]);
                        }
                    }
                }
                Op::MatVec(w, x) => {
                    let (tw, tx) = (v(*w), v(*x));
                    let kk = tw.shape()[1];
                    let gw = slot(&mut grads, *w, tw.shape());
                    for (i, &gi) in g.data().iter().enumerate() {
                        if gi != 0.0 {
                            axpy(gi, tx.data(), &mut gw.data_mut()[i * kk..(i + 1) * kk]);
                        }
                    }
                    let gx = slot(&mut grads, *x, tx.shape());
                    for (i, &gi) in g.data().iter().enumerate() {
                        if gi != 0.0 {
                            axpy(gi, &tw.data()[i * kk..(i + 1) * kk], gx.data_mut());
                        }
                    }
                }
                Op::VecMat(x, m) => {
                    let (tx, tm) = (v(*x), v(*m));
                    let gx = slot(&mut grads, *x, tx.shape());
                    for i in 0..tx.len() {
                        gx.data_mut()[i] += dot(g.data(), tm.row(i));
                    }
                    let gm = slot(&mut grads, *m, tm.shape());
                    for (i, &xi) in tx.data().iter().enumerate() {
                        axpy(xi, g.data(), gm.row_mut(i));
                    }
                }
                Op::Add(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    slot(&mut grads, *b, g.shape()).add_assign(&g);
                }
                Op::Sub(a, b) => {
                    slot(&mut grads, *a, g.shape()).add_assign(&g);
                    axpy(-1.0, g.data(), slot(&mut grads, *b, g.shape()).data_mut());
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (v(*a), v(*b));
                    let ga = slot(&mut grads, *a, g.shape());
                    for ((o, gi), bi) in ga.data_mut().iter_mut().zip(g.data()).zip(tb.data()) {
                        *o += gi * bi;
                    }
                    let gb = slot(&mut grads, *b, g.shape());
                    for ((o, gi), ai) in gb.data_mut().iter_mut().zip(g.data()).zip(ta.data()) {
                        *o += gi * ai;
                    }
                }
                Op::Scale(x, c) => {
                    axpy(*c, g.data(), slot(&mut grads, *x, g.shape()).data_mut());
                }
                Op::AddRow(m, r) => {
                    slot(&mut grads, *m, g.shape()).add_assign(&g);
                    let c = g.shape()[1];
                    let gr = slot(&mut grads, *r, &[c]);
                    for row in 0..g.shape()[0] {
                        axpy(1.0, g.row(row), gr.data_mut());
                    }
                }
                Op::Tanh(x) => {
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gi), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gi * (1.0 - y * y);
                    }
                }
                Op::Sigmoid(x) => {
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gi), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gi * y * (1.0 - y);
                    }
                }
                Op::Relu(x) => {
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gi), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        if *y > 0.0 {
                            *o += gi;
                        }
                    }
                }
                Op::LogSigmoid(x) => {
                    let tx = v(*x);
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gi), xi) in gx.data_mut().iter_mut().zip(g.data()).zip(tx.data()) {
                        *o += gi * sigmoid(-xi);
                    }
                }
                Op::Softmax(x) => {
                    let s = dot(g.data(), out.data());
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gi), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += y * (gi - s);
                    }
                }
                Op::LogSoftmax(x) => {
                    let s: f64 = g.data().iter().sum();
                    let gx = slot(&mut grads, *x, g.shape());
                    for ((o, gi), y) in gx.data_mut().iter_mut().zip(g.data()).zip(out.data()) {
                        *o += gi - y.exp() * s;
                    }
                }
                Op::Embedding(t, id) => {
                    let gt = slot(&mut grads, *t, v(*t).shape());
                    axpy(1.0, g.data(), gt.row_mut(*id));
                }
                Op::Concat(xs) => {
                    let mut off = 0;
                    for &x in xs {
                        let n = v(x).len();
                        axpy(1.0, &g.data()[off..off + n], slot(&mut grads, x, &[n]).data_mut());
                        off += n;
                    }
                }
                Op::Slice(x, start) => {
                    let gx = slot(&mut grads, *x, v(*x).shape());
                    axpy(1.0, g.data(), &mut gx.data_mut()[*start..*start + g.len()]);
                }
                Op::Stack(xs) => {
                    let c = g.shape()[1];
                    for (r, &x) in xs.iter().enumerate() {
                        axpy(1.0, g.row(r), slot(&mut grads, x, &[c]).data_mut());
                    }
                }
                Op::MaxOverTime(m, arg) => {
                    let tm = v(*m);
                    let d = tm.shape()[1];
                    let gm = slot(&mut grads, *m, tm.shape());
                    for (j, &r) in arg.iter().enumerate() {
                        gm.data_mut()[r * d + j] += g.data()[j];
                    }
                }
                Op::Sum(x) => {
                    let gx = slot(&mut grads, *x, v(*x).shape());
                    let gi = g.item();
                    gx.data_mut().iter_mut().for_each(|o| *o += gi);
                }
                Op::Mean(x) => {
                    let gx = slot(&mut grads, *x, v(*x).shape());
                    let gi = g.item() / gx.len() as f64;
                    gx.data_mut().iter_mut().for_each(|o| *o += gi);
                }
                Op::SumN(xs) => {
                    for &x in xs {
                        slot(&mut grads, x, g.shape()).add_assign(&g);
                    }
                }
                Op::Pick(x, i) => {
                    slot(&mut grads, *x, v(*x).shape()).data_mut()[*i] += g.item();
                }
                Op::Dot(a, b) => {
                    let gi = g.item();
                    let (ta, tb) = (v(*a), v(*b));
                    axpy(gi, tb.data(), slot(&mut grads, *a, ta.shape()).data_mut());
                    axpy(gi, ta.data(), slot(&mut grads, *b, tb.shape()).data_mut());
                }
            }
        }
        Ok(Gradients { nodes: grads, params })
    }
}
