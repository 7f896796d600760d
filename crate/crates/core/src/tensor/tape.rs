//! Reverse-mode autodiff over a fixed primitive op set.
//!
//! A [`Tape`] records eagerly-evaluated ops in topological order (operands
//! always precede their consumers, by construction). [`Tape::backward`]
//! walks the tape once in reverse, accumulating vector-Jacobian products.
//!
//! The op set is deliberately small so the backward pass stays exhaustively
//! testable; everything else (MSE, KL divergence, clamps, log-softmax,
//! Gaussian log-likelihoods) is composed from these primitives.

use super::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// Primitive ops. Binary ops hold both operand ids.
#[derive(Debug, Clone)]
pub enum Op {
    /// Input node; `param` marks it as a trainable parameter.
    Leaf { param: bool },
    /// `a[m,k] @ b[k,n]`.
    MatMul(NodeId, NodeId),
    /// Elementwise sum of two same-shape tensors.
    Add(NodeId, NodeId),
    /// Broadcast a row vector over every row of a matrix.
    AddRow(NodeId, NodeId),
    /// Elementwise product of two same-shape tensors.
    Mul(NodeId, NodeId),
    /// Multiply every element by a constant.
    Scale(NodeId, f64),
    /// Add a constant to every element.
    AddScalar(NodeId, f64),
    Tanh(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Square(NodeId),
    /// Full reduction to a scalar.
    Sum(NodeId),
    /// Full mean reduction to a scalar.
    Mean(NodeId),
}

struct Node {
    op: Op,
    value: Tensor,
}

/// Wengert list: ops recorded in execution order with their forward values.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    /// Insert a constant input.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: false }, value)
    }

    /// Insert a trainable-parameter input.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(Op::Leaf { param: true }, value)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 {
            return Err(Error::dim(
                "matmul",
                format!("need matrices, got {:?} and {:?}", ta.shape(), tb.shape()),
            ));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let (k2, n) = (tb.shape()[0], tb.shape()[1]);
        if k != k2 {
            return Err(Error::dim(
                "matmul",
                format!("inner dims differ: {:?} @ {:?}", ta.shape(), tb.shape()),
            ));
        }
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        let value = Tensor::new(vec![m, n], out)?;
        Ok(self.push(Op::MatMul(a, b), value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(
                "add",
                format!("shapes differ: {:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Add(a, b), value))
    }

    /// `matrix[r,c] + row[c]`, broadcasting the row over every matrix row.
    pub fn add_row(&mut self, matrix: NodeId, row: NodeId) -> Result<NodeId> {
        let (tm, tr) = (self.value(matrix), self.value(row));
        let cols = tm.cols();
        if tm.shape().len() != 2 || tr.numel() != cols {
            return Err(Error::dim(
                "add_row",
                format!("cannot broadcast {:?} over {:?}", tr.shape(), tm.shape()),
            ));
        }
        let mut data = tm.data().to_vec();
        for r in 0..tm.rows() {
            for c in 0..cols {
                data[r * cols + c] += tr.data()[c];
            }
        }
        let value = Tensor::new(tm.shape().to_vec(), data)?;
        Ok(self.push(Op::AddRow(matrix, row), value))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(
                "mul",
                format!("shapes differ: {:?} vs {:?}", ta.shape(), tb.shape()),
            ));
        }
        let data: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Mul(a, b), value))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let ta = self.value(a);
        let data: Vec<f64> = ta.data().iter().map(|x| x * c).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same size");
        self.push(Op::Scale(a, c), value)
    }

    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        let ta = self.value(a);
        let data: Vec<f64> = ta.data().iter().map(|x| x + c).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same size");
        self.push(Op::AddScalar(a, c), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data: Vec<f64> = ta.data().iter().map(|x| x.tanh()).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same size");
        self.push(Op::Tanh(a), value)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data: Vec<f64> = ta.data().iter().map(|x| x.max(0.0)).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same size");
        self.push(Op::Relu(a), value)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data: Vec<f64> = ta.data().iter().map(|x| x.exp()).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same size");
        self.push(Op::Exp(a), value)
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        let ta = self.value(a);
        if ta.data().iter().any(|&x| x <= 0.0) {
            return Err(Error::Contract("log of non-positive value".into()));
        }
        let data: Vec<f64> = ta.data().iter().map(|x| x.ln()).collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.push(Op::Log(a), value))
    }

    pub fn square(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let data: Vec<f64> = ta.data().iter().map(|x| x * x).collect();
        let value = Tensor::new(ta.shape().to_vec(), data).expect("same size");
        self.push(Op::Square(a), value)
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s: f64 = self.value(a).data().iter().sum();
        self.push(Op::Sum(a), Tensor::scalar(s))
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let ta = self.value(a);
        let s: f64 = ta.data().iter().sum();
        let n = ta.numel() as f64;
        self.push(Op::Mean(a), Tensor::scalar(s / n))
    }

    // ── composed helpers ────────────────────────────────────────────────

    /// `a - b`, composed as `a + (-1)·b`.
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let nb = self.scale(b, -1.0);
        self.add(a, nb)
    }

    /// Elementwise clamp with pass-through gradient inside the interval,
    /// composed as `lo + relu(x - lo) - relu(x - hi)`.
    pub fn clamp(&mut self, x: NodeId, lo: f64, hi: f64) -> NodeId {
        let x_lo = self.add_scalar(x, -lo);
        let r_lo = self.relu(x_lo);
        let x_hi = self.add_scalar(x, -hi);
        let r_hi = self.relu(x_hi);
        let nr_hi = self.scale(r_hi, -1.0);
        let inner = self.add(r_lo, nr_hi).expect("same shape by construction");
        self.add_scalar(inner, lo)
    }

    /// Who a node's operands are (used by backward; exposed for tests).
    pub fn op(&self, id: NodeId) -> &Op {
        &self.nodes[id.0].op
    }

    /// Reverse pass from a scalar loss. Every node reachable from the loss
    /// gets a gradient; leaves that are not reached read back as zeros.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        if !loss_value.is_finite() {
            return Err(Error::Training("non-finite loss in backward".into()));
        }

        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            match self.nodes[i].op {
                Op::Leaf { .. } => {
                    grads[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let (m, k) = (ta.shape()[0], ta.shape()[1]);
                    let n = tb.shape()[1];
                    // dA = G @ B^T
                    let mut da = vec![0.0; m * k];
                    for r in 0..m {
                        for p in 0..k {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[r * n + j] * tb.data()[p * n + j];
                            }
                            da[r * k + p] = acc;
                        }
                    }
                    // dB = A^T @ G
                    let mut db = vec![0.0; k * n];
                    for p in 0..k {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for r in 0..m {
                                acc += ta.data()[r * k + p] * g[r * n + j];
                            }
                            db[p * n + j] = acc;
                        }
                    }
                    accumulate(&mut grads, a, &da);
                    accumulate(&mut grads, b, &db);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, a, &g);
                    accumulate(&mut grads, b, &g);
                }
                Op::AddRow(mat, row) => {
                    accumulate(&mut grads, mat, &g);
                    let cols = self.value(row).numel();
                    let mut dr = vec![0.0; cols];
                    for (idx, gv) in g.iter().enumerate() {
                        dr[idx % cols] += gv;
                    }
                    accumulate(&mut grads, row, &dr);
                }
                Op::Mul(a, b) => {
                    let (ta, tb) = (self.value(a), self.value(b));
                    let da: Vec<f64> = g.iter().zip(tb.data()).map(|(gv, y)| gv * y).collect();
                    let db: Vec<f64> = g.iter().zip(ta.data()).map(|(gv, x)| gv * x).collect();
                    accumulate(&mut grads, a, &da);
                    accumulate(&mut grads, b, &db);
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = g.iter().map(|gv| gv * c).collect();
                    accumulate(&mut grads, a, &da);
                }
                Op::AddScalar(a, _) => {
                    accumulate(&mut grads, a, &g);
                }
                Op::Tanh(a) => {
                    let y = &self.nodes[i].value;
                    let da: Vec<f64> = g
                        .iter()
                        .zip(y.data())
                        .map(|(gv, yv)| gv * (1.0 - yv * yv))
                        .collect();
                    accumulate(&mut grads, a, &da);
                }
                Op::Relu(a) => {
                    let x = self.value(a);
                    let da: Vec<f64> = g
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, a, &da);
                }
                Op::Exp(a) => {
                    let y = &self.nodes[i].value;
                    let da: Vec<f64> = g.iter().zip(y.data()).map(|(gv, yv)| gv * yv).collect();
                    accumulate(&mut grads, a, &da);
                }
                Op::Log(a) => {
                    let x = self.value(a);
                    let da: Vec<f64> = g.iter().zip(x.data()).map(|(gv, xv)| gv / xv).collect();
                    accumulate(&mut grads, a, &da);
                }
                Op::Square(a) => {
                    let x = self.value(a);
                    let da: Vec<f64> = g
                        .iter()
                        .zip(x.data())
                        .map(|(gv, xv)| gv * 2.0 * xv)
                        .collect();
                    accumulate(&mut grads, a, &da);
                }
                Op::Sum(a) => {
                    let n = self.value(a).numel();
                    accumulate(&mut grads, a, &vec![g[0]; n]);
                }
                Op::Mean(a) => {
                    let n = self.value(a).numel();
                    accumulate(&mut grads, a, &vec![g[0] / n as f64; n]);
                }
            }
        }

        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, delta: &[f64]) {
    match &mut grads[id.0] {
        Some(existing) => {
            for (e, d) in existing.iter_mut().zip(delta) {
                *e += d;
            }
        }
        slot => *slot = Some(delta.to_vec()),
    }
}

/// Per-node gradients from one backward pass.
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. `id`. Nodes the loss never touched get
    /// zeros of the node's shape.
    pub fn wrt(&self, tape: &Tape, id: NodeId) -> Tensor {
        let shape = tape.value(id).shape().to_vec();
        match &self.grads[id.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient matches node shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn is_populated(&self, id: NodeId) -> bool {
        self.grads[id.0].is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite difference d/dx f at x, h = 1e-5.
    fn central_diff(f: impl Fn(f64) -> f64, x: f64) -> f64 {
        let h = 1e-5;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn square_gradient_matches_finite_difference() {
        // loss = x^2 at x = 3 -> dL/dx = 6
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let loss = tape.square(x);
        let grads = tape.backward(loss).unwrap();
        let g = grads.wrt(&tape, x).item();
        assert!((g - 6.0).abs() < 1e-12);
        let fd = central_diff(|v| v * v, 3.0);
        assert!(((g - fd) / fd).abs() < 1e-6);
    }

    #[test]
    fn constant_loss_has_zero_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, -2.0]));
        let _ = x;
        let c = tape.leaf(Tensor::scalar(5.0));
        let loss = tape.scale(c, 1.0);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(&tape, x).data(), &[0.0, 0.0]);
    }

    #[test]
    fn least_squares_gradient_matches_finite_difference() {
        // loss = mean((W x - y)^2) for a 2x2 case, checked elementwise.
        let w0 = [0.4, -0.7, 1.2, 0.1];
        let x0 = [0.5, -1.5];
        let y0 = [1.0, -2.0];
        let loss_of = |w: &[f64]| {
            let r0 = w[0] * x0[0] + w[1] * x0[1] - y0[0];
            let r1 = w[2] * x0[0] + w[3] * x0[1] - y0[1];
            (r0 * r0 + r1 * r1) / 2.0
        };

        let mut tape = Tape::new();
        let w = tape.param(Tensor::matrix(2, 2, w0.to_vec()).unwrap());
        let x = tape.leaf(Tensor::matrix(2, 1, x0.to_vec()).unwrap());
        let y = tape.leaf(Tensor::matrix(2, 1, y0.to_vec()).unwrap());
        let wx = tape.matmul(w, x).unwrap();
        let r = tape.sub(wx, y).unwrap();
        let sq = tape.square(r);
        let loss = tape.mean(sq);
        let grads = tape.backward(loss).unwrap();
        let gw = grads.wrt(&tape, w);

        for i in 0..4 {
            let f = |v: f64| {
                let mut wp = w0;
                wp[i] = v;
                loss_of(&wp)
            };
            let fd = central_diff(f, w0[i]);
            let rel = (gw.data()[i] - fd).abs() / fd.abs().max(1e-12);
            assert!(rel < 1e-4, "coord {i}: analytic {} fd {}", gw.data()[i], fd);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.square(x);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn clamp_value_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![-15.0, 0.5, 37.0]));
        let c = tape.clamp(x, -10.0, 10.0);
        assert_eq!(tape.value(c).data(), &[-10.0, 0.5, 10.0]);
        let s = tape.sum(c);
        let grads = tape.backward(s).unwrap();
        // pass-through inside the interval, flat outside
        assert_eq!(grads.wrt(&tape, x).data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn fanout_accumulates_gradients() {
        // loss = x*x + x  (via separate paths) -> dL/dx = 2x + 1
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.5));
        let xx = tape.mul(x, x).unwrap();
        let sum = tape.add(xx, x).unwrap();
        let loss = tape.sum(sum);
        let grads = tape.backward(loss).unwrap();
        assert!((grads.wrt(&tape, x).item() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn add_row_broadcast_and_column_sum_gradient() {
        let mut tape = Tape::new();
        let m = tape.param(Tensor::matrix(2, 3, vec![0.0; 6]).unwrap());
        let b = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0]));
        let out = tape.add_row(m, b).unwrap();
        assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 1.0, 2.0, 3.0]);
        let loss = tape.sum(out);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.wrt(&tape, b).data(), &[2.0, 2.0, 2.0]);
    }
}
