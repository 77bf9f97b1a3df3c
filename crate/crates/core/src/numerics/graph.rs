//! Reverse-mode differentiation over a small fixed set of rank-2 primitives.
//!
//! Operations are recorded in execution order, so the node list is already
//! topologically sorted and `backward` is a single reverse sweep.

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Half-width of the open interval arccos inputs are clamped into.
pub const ARCCOS_CLAMP: f64 = 1e-12;
/// Added under the square root of every row norm.
pub const NORM_GUARD: f64 = 1e-12;
/// Inputs further than this outside [-1, 1] are a domain error rather than rounding.
const ARCCOS_SLACK: f64 = 1e-9;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reduction direction for rank-2 tensors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    /// Collapse the row axis: `[m, n] -> [1, n]`.
    Rows,
    /// Collapse the column axis: `[m, n] -> [m, 1]`.
    Cols,
    /// Collapse everything: `[m, n] -> [1, 1]`.
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimitiveKind {
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    Scale,
    Shift,
    Exp,
    Log,
    Sqrt,
    ClampMin,
    Arccos,
    Relu,
    Sum,
    Mean,
    MaxWithIndex,
    L2Norm,
    Softmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

/// How the right operand of an elementwise op maps onto the left one.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Broadcast {
    Same,
    Row,
    Col,
    Scalar,
}

impl Broadcast {
    fn resolve(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        let (m, n) = (a[0], a[1]);
        match (b[0], b[1]) {
            (r, c) if r == m && c == n => Ok(Broadcast::Same),
            (1, 1) => Ok(Broadcast::Scalar),
            (1, c) if c == n => Ok(Broadcast::Row),
            (r, 1) if r == m => Ok(Broadcast::Col),
            _ => Err(Error::shape(op, format!("{a:?} vs {b:?}"))),
        }
    }

    #[inline]
    fn index(self, i: usize, j: usize, n: usize) -> usize {
        match self {
            Broadcast::Same => i * n + j,
            Broadcast::Row => j,
            Broadcast::Col => i,
            Broadcast::Scalar => 0,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    MatMul(Var, Var),
    Transpose(Var),
    Binary(Binary, Broadcast, Var, Var),
    Scale(Var, f64),
    Shift(Var),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    ClampMin(Var, f64),
    Arccos(Var),
    Relu(Var),
    Sum(Var, Axis),
    Mean(Var, Axis),
    MaxRows(Var, Vec<usize>),
    L2NormRows(Var),
    SoftmaxRows(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
}

/// Recorded computation. Owned by one execution context.
#[derive(Clone, Debug)]
pub struct Graph {
    nodes: Vec<Node>,
    record: bool,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

fn rank2(op: &'static str, t: &Tensor) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        s => Err(Error::shape(op, format!("expected a rank-2 tensor, got {s:?}"))),
    }
}

fn check_finite(op: &'static str, data: &[f64]) -> Result<()> {
    match data.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("{op} (flat index {i})"))),
        None => Ok(()),
    }
}

fn reduce_shape(m: usize, n: usize, axis: Axis) -> Vec<usize> {
    match axis {
        Axis::Rows => vec![1, n],
        Axis::Cols => vec![m, 1],
        Axis::All => vec![1, 1],
    }
}

fn reduce_sum(t: &Tensor, axis: Axis) -> Tensor {
    let (m, n) = (t.rows(), t.cols());
    let d = t.data();
    let mut out = vec![0.0; match axis {
        Axis::Rows => n,
        Axis::Cols => m,
        Axis::All => 1,
    }];
    for i in 0..m {
        for j in 0..n {
            let k = match axis {
                Axis::Rows => j,
                Axis::Cols => i,
                Axis::All => 0,
            };
            out[k] += d[i * n + j];
        }
    }
    Tensor::from_parts(reduce_shape(m, n, axis), out)
}

/// Sum a `[m, n]` gradient down to the shape the right operand had.
fn unbroadcast(g: &Tensor, bc: Broadcast) -> Tensor {
    match bc {
        Broadcast::Same => g.clone(),
        Broadcast::Row => reduce_sum(g, Axis::Rows),
        Broadcast::Col => reduce_sum(g, Axis::Cols),
        Broadcast::Scalar => reduce_sum(g, Axis::All),
    }
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
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

fn transpose_raw(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

fn clamp_unit(u: f64) -> f64 {
    u.clamp(-1.0 + ARCCOS_CLAMP, 1.0 - ARCCOS_CLAMP)
}

impl Graph {
    /// A graph that records operations for differentiation.
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), record: true }
    }

    /// A graph that only evaluates; every node is treated as a constant.
    pub fn inference() -> Self {
        Graph { nodes: Vec::new(), record: false }
    }

    pub fn is_recording(&self) -> bool {
        self.record
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push_input(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_input(value, false)
    }

    fn push_input(&mut self, value: Tensor, trainable: bool) -> Var {
        self.nodes.push(Node { value, op: Op::Input, trainable });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let op = if self.record { op } else { Op::Input };
        self.nodes.push(Node { value, op, trainable: false });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        self.nodes[v.0].trainable
    }

    /// Trainable leaves in creation order.
    pub fn params(&self) -> Vec<Var> {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].trainable).map(Var).collect()
    }

    /// Apply a primitive by kind. Unary and reduction kinds take one input,
    /// binary kinds two; `Scale`, `Shift` and `ClampMin` read `scalar`.
    pub fn apply(&mut self, kind: PrimitiveKind, inputs: &[Var], scalar: f64) -> Result<Var> {
        let one = || inputs.first().copied().ok_or_else(|| Error::shape("apply", "missing input"));
        let two = || match inputs {
            [a, b] => Ok((*a, *b)),
            _ => Err(Error::shape("apply", "expected two inputs")),
        };
        match kind {
            PrimitiveKind::MatMul => two().and_then(|(a, b)| self.matmul(a, b)),
            PrimitiveKind::Transpose => self.transpose(one()?),
            PrimitiveKind::Add => two().and_then(|(a, b)| self.add(a, b)),
            PrimitiveKind::Sub => two().and_then(|(a, b)| self.sub(a, b)),
            PrimitiveKind::Mul => two().and_then(|(a, b)| self.mul(a, b)),
            PrimitiveKind::Div => two().and_then(|(a, b)| self.div(a, b)),
            PrimitiveKind::Scale => self.scale(one()?, scalar),
            PrimitiveKind::Shift => self.shift(one()?, scalar),
            PrimitiveKind::Exp => self.exp(one()?),
            PrimitiveKind::Log => self.log(one()?),
            PrimitiveKind::Sqrt => self.sqrt(one()?),
            PrimitiveKind::ClampMin => self.clamp_min(one()?, scalar),
            PrimitiveKind::Arccos => self.arccos(one()?),
            PrimitiveKind::Relu => self.relu(one()?),
            PrimitiveKind::Sum => self.sum(one()?, Axis::All),
            PrimitiveKind::Mean => self.mean(one()?, Axis::All),
            PrimitiveKind::MaxWithIndex => self.max_rows(one()?).map(|(v, _)| v),
            PrimitiveKind::L2Norm => self.l2_norm_rows(one()?),
            PrimitiveKind::Softmax => self.softmax_rows(one()?),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = rank2("matmul", self.value(a))?;
        let (k2, n) = rank2("matmul", self.value(b))?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m}, {k}] x [{k2}, {n}]")));
        }
        let out = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        check_finite("matmul", &out)?;
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = rank2("transpose", self.value(a))?;
        let out = transpose_raw(self.value(a).data(), m, n);
        Ok(self.push(Tensor::from_parts(vec![n, m], out), Op::Transpose(a)))
    }

    fn binary(&mut self, kind: Binary, name: &'static str, a: Var, b: Var) -> Result<Var> {
        let (m, n) = rank2(name, self.value(a))?;
        rank2(name, self.value(b))?;
        let bc = Broadcast::resolve(name, self.value(a).shape(), self.value(b).shape())?;
        let (ad, bd) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                let x = ad[i * n + j];
                let y = bd[bc.index(i, j, n)];
                out.push(match kind {
                    Binary::Add => x + y,
                    Binary::Sub => x - y,
                    Binary::Mul => x * y,
                    Binary::Div => x / y,
                });
            }
        }
        check_finite(name, &out)?;
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::Binary(kind, bc, a, b)))
    }

    /// Elementwise `a + b`; `b` may be `[1, n]`, `[m, 1]` or `[1, 1]`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, "mul", a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Div, "div", a, b)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        check_finite("scale", out.data())?;
        Ok(self.push(out, Op::Scale(a, s)))
    }

    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = self.value(a).map(|v| v + c);
        check_finite("shift", out.data())?;
        Ok(self.push(out, Op::Shift(a)))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        rank2("exp", self.value(a))?;
        let out = self.value(a).map(f64::exp);
        check_finite("exp", out.data())?;
        Ok(self.push(out, Op::Exp(a)))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        rank2("log", self.value(a))?;
        if let Some((index, &value)) = self.value(a).data().iter().enumerate().find(|(_, v)| **v <= 0.0) {
            return Err(Error::LogDomain { index, value });
        }
        let out = self.value(a).map(f64::ln);
        Ok(self.push(out, Op::Log(a)))
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        rank2("sqrt", self.value(a))?;
        if let Some(&v) = self.value(a).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::invalid("sqrt input", format!("{v} is not strictly positive")));
        }
        let out = self.value(a).map(f64::sqrt);
        Ok(self.push(out, Op::Sqrt(a)))
    }

    /// `max(a, floor)`; entries below `floor` get zero gradient.
    pub fn clamp_min(&mut self, a: Var, floor: f64) -> Result<Var> {
        rank2("clamp_min", self.value(a))?;
        let out = self.value(a).map(|v| v.max(floor));
        Ok(self.push(out, Op::ClampMin(a, floor)))
    }

    /// Arccos with inputs clamped to `[-1 + 1e-12, 1 - 1e-12]`. Inputs more than
    /// 1e-9 outside `[-1, 1]` are rejected.
    pub fn arccos(&mut self, a: Var) -> Result<Var> {
        rank2("arccos", self.value(a))?;
        if let Some(&value) = self.value(a).data().iter().find(|v| v.abs() > 1.0 + ARCCOS_SLACK) {
            return Err(Error::ArccosDomain { value });
        }
        let out = self.value(a).map(|v| clamp_unit(v).acos());
        Ok(self.push(out, Op::Arccos(a)))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        rank2("relu", self.value(a))?;
        let out = self.value(a).map(|v| v.max(0.0));
        Ok(self.push(out, Op::Relu(a)))
    }

    pub fn sum(&mut self, a: Var, axis: Axis) -> Result<Var> {
        rank2("sum", self.value(a))?;
        let out = reduce_sum(self.value(a), axis);
        check_finite("sum", out.data())?;
        Ok(self.push(out, Op::Sum(a, axis)))
    }

    pub fn mean(&mut self, a: Var, axis: Axis) -> Result<Var> {
        let (m, n) = rank2("mean", self.value(a))?;
        let count = match axis {
            Axis::Rows => m,
            Axis::Cols => n,
            Axis::All => m * n,
        } as f64;
        let out = reduce_sum(self.value(a), axis).map(|v| v / count);
        check_finite("mean", out.data())?;
        Ok(self.push(out, Op::Mean(a, axis)))
    }

    /// Per-row maximum as `[m, 1]` plus the column index of each maximum.
    /// Ties resolve to the lowest index.
    pub fn max_rows(&mut self, a: Var) -> Result<(Var, Vec<usize>)> {
        let (m, n) = rank2("max", self.value(a))?;
        let d = self.value(a).data();
        let mut vals = Vec::with_capacity(m);
        let mut idx = Vec::with_capacity(m);
        for i in 0..m {
            let row = &d[i * n..(i + 1) * n];
            let k = argmax(row);
            idx.push(k);
            vals.push(row[k]);
        }
        let v = self.push(Tensor::from_parts(vec![m, 1], vals), Op::MaxRows(a, idx.clone()));
        Ok((v, idx))
    }

    /// Euclidean norm of each row, `sqrt(sum x^2 + 1e-12)`, as `[m, 1]`.
    pub fn l2_norm_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = rank2("l2_norm", self.value(a))?;
        let d = self.value(a).data();
        let out: Vec<f64> = (0..m)
            .map(|i| (d[i * n..(i + 1) * n].iter().map(|v| v * v).sum::<f64>() + NORM_GUARD).sqrt())
            .collect();
        check_finite("l2_norm", &out)?;
        Ok(self.push(Tensor::from_parts(vec![m, 1], out), Op::L2NormRows(a)))
    }

    /// Softmax across each row, computed after subtracting the row maximum.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        rank2("softmax", self.value(a))?;
        let out = softmax_rows(self.value(a));
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// Gradients of the scalar `output` with respect to every node.
    pub fn backward(&self, output: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let out_val = self.value(output);
        if !out_val.is_scalar() {
            return Err(Error::NotScalar(out_val.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(Tensor::filled(out_val.shape(), 1.0));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            for (input, contrib) in self.local_grads(node, &g) {
                accumulate(&mut grads[input.0], contrib);
            }
            grads[idx] = Some(g);
        }

        if let Some(i) = grads.iter().flatten().position(|g| !g.all_finite()) {
            return Err(Error::NonFinite(format!("backward (gradient of node {i})")));
        }
        let shapes = self.nodes.iter().map(|n| n.value.shape().to_vec()).collect();
        Ok(Gradients { grads, shapes })
    }

    fn local_grads(&self, node: &Node, g: &Tensor) -> Vec<(Var, Tensor)> {
        let val = |v: Var| self.value(v);
        match &node.op {
            Op::Input => Vec::new(),
            Op::MatMul(a, b) => {
                let (m, k) = (val(*a).rows(), val(*a).cols());
                let n = val(*b).cols();
                let bt = transpose_raw(val(*b).data(), k, n);
                let at = transpose_raw(val(*a).data(), m, k);
                let da = matmul_raw(g.data(), &bt, m, n, k);
                let db = matmul_raw(&at, g.data(), k, m, n);
                vec![
                    (*a, Tensor::from_parts(vec![m, k], da)),
                    (*b, Tensor::from_parts(vec![k, n], db)),
                ]
            }
            Op::Transpose(a) => {
                let (m, n) = (g.rows(), g.cols());
                vec![(*a, Tensor::from_parts(vec![n, m], transpose_raw(g.data(), m, n)))]
            }
            Op::Binary(kind, bc, a, b) => {
                let (m, n) = (g.rows(), g.cols());
                let (ad, bd, gd) = (val(*a).data(), val(*b).data(), g.data());
                let mut ga = vec![0.0; m * n];
                let mut gb_full = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        let k = i * n + j;
                        let x = ad[k];
                        let y = bd[bc.index(i, j, n)];
                        let (dx, dy) = match kind {
                            Binary::Add => (1.0, 1.0),
                            Binary::Sub => (1.0, -1.0),
                            Binary::Mul => (y, x),
                            Binary::Div => (1.0 / y, -x / (y * y)),
                        };
                        ga[k] = gd[k] * dx;
                        gb_full[k] = gd[k] * dy;
                    }
                }
                let gb = unbroadcast(&Tensor::from_parts(vec![m, n], gb_full), *bc);
                vec![(*a, Tensor::from_parts(vec![m, n], ga)), (*b, gb)]
            }
            Op::Scale(a, s) => vec![(*a, g.map(|v| v * s))],
            Op::Shift(a) => vec![(*a, g.clone())],
            Op::Exp(a) => vec![(*a, zip(g, &node.value, |gv, y| gv * y))],
            Op::Log(a) => vec![(*a, zip(g, val(*a), |gv, x| gv / x))],
            Op::Sqrt(a) => vec![(*a, zip(g, &node.value, |gv, y| gv / (2.0 * y)))],
            Op::ClampMin(a, floor) => {
                let floor = *floor;
                vec![(*a, zip(g, val(*a), |gv, x| if x >= floor { gv } else { 0.0 }))]
            }
            Op::Arccos(a) => vec![(*a, zip(g, val(*a), |gv, x| {
                let u = clamp_unit(x);
                -gv / (1.0 - u * u).sqrt()
            }))],
            Op::Relu(a) => vec![(*a, zip(g, val(*a), |gv, x| if x > 0.0 { gv } else { 0.0 }))],
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let count = match (&node.op, axis) {
                    (Op::Sum(..), _) => 1.0,
                    (_, Axis::Rows) => m as f64,
                    (_, Axis::Cols) => n as f64,
                    (_, Axis::All) => (m * n) as f64,
                };
                let gd = g.data();
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        let src = match axis {
                            Axis::Rows => j,
                            Axis::Cols => i,
                            Axis::All => 0,
                        };
                        out[i * n + j] = gd[src] / count;
                    }
                }
                vec![(*a, Tensor::from_parts(vec![m, n], out))]
            }
            Op::MaxRows(a, idx) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let mut out = vec![0.0; m * n];
                for (i, &k) in idx.iter().enumerate() {
                    out[i * n + k] = g.data()[i];
                }
                vec![(*a, Tensor::from_parts(vec![m, n], out))]
            }
            Op::L2NormRows(a) => {
                let (m, n) = (val(*a).rows(), val(*a).cols());
                let x = val(*a).data();
                let norms = node.value.data();
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let s = g.data()[i] / norms[i];
                    for j in 0..n {
                        out[i * n + j] = s * x[i * n + j];
                    }
                }
                vec![(*a, Tensor::from_parts(vec![m, n], out))]
            }
            Op::SoftmaxRows(a) => {
                let (m, n) = (g.rows(), g.cols());
                let y = node.value.data();
                let gd = g.data();
                let mut out = vec![0.0; m * n];
                for i in 0..m {
                    let r = i * n..(i + 1) * n;
                    let dot: f64 = gd[r.clone()].iter().zip(&y[r.clone()]).map(|(a, b)| a * b).sum();
                    for k in r {
                        out[k] = y[k] * (gd[k] - dot);
                    }
                }
                vec![(*a, Tensor::from_parts(vec![m, n], out))]
            }
        }
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn accumulate(slot: &mut Option<Tensor>, contrib: Tensor) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                *a += c;
            }
        }
        None => *slot = Some(contrib),
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = k;
        }
    }
    best
}

/// Row-wise softmax of a rank-2 tensor with max subtraction.
pub fn softmax_rows(t: &Tensor) -> Tensor {
    let (m, n) = (t.rows(), t.cols());
    let d = t.data();
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let row = &d[i * n..(i + 1) * n];
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - mx).exp();
            total += e;
            out.push(e);
        }
        for v in &mut out[start..] {
            *v /= total;
        }
    }
    Tensor::from_parts(vec![m, n], out)
}

/// Result of [`Graph::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `v`, zeros when the output does not depend on it.
    pub fn get(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => g.clone(),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }

    /// Gradients for the trainable leaves of `graph`, in creation order.
    pub fn for_params(&self, graph: &Graph) -> Vec<(Var, Tensor)> {
        graph.params().into_iter().map(|v| (v, self.get(v))).collect()
    }
}
