//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] owns its nodes; every node is created after its inputs, so
//! node indices are already a topological order and [`Graph::backward`]
//! simply walks them in reverse. Values are plain [`Tensor`]s; there is no
//! broadcasting; binary element-wise ops need equal shapes and scalar
//! scaling goes through [`Graph::scalar_mul`].

mod conv;

use conv::{conv2d_backward, conv2d_forward, ConvShape};

use crate::error::{Error, Result};
use crate::operators::SharedOperator;
use crate::solvers::soft;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A named learnable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor) -> Self {
        Self {
            name: name.into(),
            value,
        }
    }
}

#[derive(Clone)]
enum Op {
    Leaf,
    Conv2d { input: NodeId, kernel: NodeId, shape: ConvShape },
    Relu(NodeId),
    Softplus(NodeId),
    SoftThreshold { x: NodeId, theta: NodeId },
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Scale(NodeId, f64),
    ScalarMul { s: NodeId, x: NodeId },
    Sum(NodeId),
    SquaredError(NodeId, NodeId),
    L1(NodeId),
    Reshape(NodeId),
    Apply { x: NodeId, op: SharedOperator },
    Adjoint { y: NodeId, op: SharedOperator },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

fn same_shape(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::ShapeMismatch {
            expected: a.dims().to_vec(),
            actual: b.dims().to_vec(),
        });
    }
    Ok(())
}

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    // ln(e^y - 1) = y + ln(1 - e^-y)
    y + (-(-y).exp()).ln_1p()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> NodeId {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, false)
    }

    pub fn param(&mut self, p: &Parameter) -> NodeId {
        self.leaf(p.value.clone(), true)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// Accumulated gradient; `None` before any backward pass reached it.
    pub fn grad(&self, id: NodeId) -> Option<&Tensor> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// 3x3 same-size cross-correlation without bias. `input` is
    /// `[batch, c_in, h, w]`, `kernel` is `[c_out, c_in, 3, 3]`.
    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId> {
        let (xd, kd) = (self.value(input).dims(), self.value(kernel).dims());
        let (batch, c_in, h, w) = match xd {
            [b, c, h, w] => (*b, *c, *h, *w),
            d => return Err(Error::InvalidArgument(format!("conv2d input must be 4-D, got {d:?}"))),
        };
        let c_out = match kd {
            [co, ci, 3, 3] if *ci == c_in => *co,
            [_, ci, 3, 3] => {
                return Err(Error::ShapeMismatch {
                    expected: vec![c_in],
                    actual: vec![*ci],
                })
            }
            d => {
                return Err(Error::InvalidArgument(format!(
                    "conv2d kernel must be [c_out, c_in, 3, 3], got {d:?}"
                )))
            }
        };
        let shape = ConvShape { batch, c_in, c_out, h, w };
        let out = conv2d_forward(self.value(input).as_slice(), self.value(kernel).as_slice(), &shape);
        let value = Tensor::from_parts(&[batch, c_out, h, w], out);
        let rg = self.rg(&[input, kernel]);
        Ok(self.push(value, Op::Conv2d { input, kernel, shape }, rg))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(|v| v.max(0.0));
        let rg = self.rg(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn softplus(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(softplus);
        let rg = self.rg(&[x]);
        self.push(value, Op::Softplus(x), rg)
    }

    /// Soft shrinkage of `x` by the scalar node `theta`.
    pub fn soft_threshold(&mut self, x: NodeId, theta: NodeId) -> Result<NodeId> {
        let t = self.value(theta);
        if t.len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: vec![1],
                actual: t.dims().to_vec(),
            });
        }
        let th = t.item();
        let value = self.value(x).map(|v| soft(v, th));
        let rg = self.rg(&[x, theta]);
        Ok(self.push(value, Op::SoftThreshold { x, theta }, rg))
    }

    fn binary(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb)?;
        let data = va.as_slice().iter().zip(vb.as_slice()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::from_parts(va.dims(), data);
        let rg = self.rg(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// `c x` for a constant `c`.
    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let value = self.value(x).map(|v| c * v);
        let rg = self.rg(&[x]);
        self.push(value, Op::Scale(x, c), rg)
    }

    /// `s x` for a one-element node `s`.
    pub fn scalar_mul(&mut self, s: NodeId, x: NodeId) -> Result<NodeId> {
        let sv = self.value(s);
        if sv.len() != 1 {
            return Err(Error::ShapeMismatch {
                expected: vec![1],
                actual: sv.dims().to_vec(),
            });
        }
        let c = sv.item();
        let value = self.value(x).map(|v| c * v);
        let rg = self.rg(&[s, x]);
        Ok(self.push(value, Op::ScalarMul { s, x }, rg))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).as_slice().iter().sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::Sum(x), rg)
    }

    /// `|a - b|^2`, summed, not averaged.
    pub fn mse(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        same_shape(va, vb)?;
        let s = va.as_slice().iter().zip(vb.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
        let rg = self.rg(&[a, b]);
        Ok(self.push(Tensor::scalar(s), Op::SquaredError(a, b), rg))
    }

    pub fn l1_norm(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).as_slice().iter().map(|v| v.abs()).sum());
        let rg = self.rg(&[x]);
        self.push(value, Op::L1(x), rg)
    }

    pub fn reshape(&mut self, x: NodeId, dims: &[usize]) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(dims)?;
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// `A x` for a fixed operator; the result takes the operator's output
    /// shape.
    pub fn linear_apply(&mut self, x: NodeId, op: &SharedOperator) -> Result<NodeId> {
        let v = self.value(x);
        if v.len() != op.in_len() {
            return Err(Error::ShapeMismatch {
                expected: op.in_dims().to_vec(),
                actual: v.dims().to_vec(),
            });
        }
        let mut out = vec![0.0; op.out_len()];
        op.apply_into(v.as_slice(), &mut out);
        let value = Tensor::from_parts(op.out_dims(), out);
        let rg = self.rg(&[x]);
        Ok(self.push(value, Op::Apply { x, op: op.clone() }, rg))
    }

    /// `A^T y` for a fixed operator.
    pub fn linear_adjoint(&mut self, y: NodeId, op: &SharedOperator) -> Result<NodeId> {
        let v = self.value(y);
        if v.len() != op.out_len() {
            return Err(Error::ShapeMismatch {
                expected: op.out_dims().to_vec(),
                actual: v.dims().to_vec(),
            });
        }
        let mut out = vec![0.0; op.in_len()];
        op.adjoint_into(v.as_slice(), &mut out);
        let value = Tensor::from_parts(op.in_dims(), out);
        let rg = self.rg(&[y]);
        Ok(self.push(value, Op::Adjoint { y, op: op.clone() }, rg))
    }

    /// Reverse pass from a one-element `loss`. Adjoints are computed fresh
    /// and then added to each node's stored gradient, so repeated calls
    /// accumulate.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.dims().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(t) => add_into(t.as_mut_slice(), &g),
                None => node.grad = Some(Tensor::from_parts(node.value.dims(), g)),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |id: NodeId| nodes[id.0].value.as_slice();
        // Adjoint buffer of `id`, or None when it needs no gradient.
        macro_rules! slot {
            ($id:expr) => {{
                let id: NodeId = $id;
                if nodes[id.0].requires_grad {
                    let len = nodes[id.0].value.len();
                    Some(adj[id.0].get_or_insert_with(|| vec![0.0; len]))
                } else {
                    None
                }
            }};
        }

        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { input, kernel, shape } => {
                let (x, k) = (val(*input), val(*kernel));
                // Take both buffers out so they can be borrowed together.
                let mut gi = slot!(*input).map(std::mem::take);
                let mut gk = slot!(*kernel).map(std::mem::take);
                conv2d_backward(x, k, g, shape, gi.as_deref_mut(), gk.as_deref_mut());
                if let Some(buf) = gi {
                    adj[input.0] = Some(buf);
                }
                if let Some(buf) = gk {
                    adj[kernel.0] = Some(buf);
                }
            }
            Op::Relu(x) => {
                let xv = val(*x);
                if let Some(d) = slot!(*x) {
                    for ((d, gv), xv) in d.iter_mut().zip(g).zip(xv) {
                        if *xv > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Softplus(x) => {
                let xv = val(*x);
                if let Some(d) = slot!(*x) {
                    for ((d, gv), xv) in d.iter_mut().zip(g).zip(xv) {
                        *d += gv * sigmoid(*xv);
                    }
                }
            }
            Op::SoftThreshold { x, theta } => {
                let xv = val(*x);
                let th = val(*theta)[0];
                if let Some(d) = slot!(*x) {
                    for ((d, gv), xv) in d.iter_mut().zip(g).zip(xv) {
                        if xv.abs() > th {
                            *d += gv;
                        }
                    }
                }
                if let Some(d) = slot!(*theta) {
                    let mut s = 0.0;
                    for (gv, xv) in g.iter().zip(xv) {
                        if xv.abs() > th {
                            s -= gv * xv.signum();
                        }
                    }
                    d[0] += s;
                }
            }
            Op::Add(a, b) => {
                if let Some(d) = slot!(*a) {
                    add_into(d, g);
                }
                if let Some(d) = slot!(*b) {
                    add_into(d, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(d) = slot!(*a) {
                    add_into(d, g);
                }
                if let Some(d) = slot!(*b) {
                    for (d, gv) in d.iter_mut().zip(g) {
                        *d -= gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(d) = slot!(*a) {
                    for ((d, gv), bv) in d.iter_mut().zip(g).zip(bv) {
                        *d += gv * bv;
                    }
                }
                if let Some(d) = slot!(*b) {
                    for ((d, gv), av) in d.iter_mut().zip(g).zip(av) {
                        *d += gv * av;
                    }
                }
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                if let Some(d) = slot!(*a) {
                    for ((d, gv), bv) in d.iter_mut().zip(g).zip(bv) {
                        *d += gv / bv;
                    }
                }
                if let Some(d) = slot!(*b) {
                    for (((d, gv), av), bv) in d.iter_mut().zip(g).zip(av).zip(bv) {
                        *d -= gv * av / (bv * bv);
                    }
                }
            }
            Op::Scale(x, c) => {
                if let Some(d) = slot!(*x) {
                    for (d, gv) in d.iter_mut().zip(g) {
                        *d += c * gv;
                    }
                }
            }
            Op::ScalarMul { s, x } => {
                let (sv, xv) = (val(*s)[0], val(*x));
                if let Some(d) = slot!(*s) {
                    d[0] += g.iter().zip(xv).map(|(gv, xv)| gv * xv).sum::<f64>();
                }
                if let Some(d) = slot!(*x) {
                    for (d, gv) in d.iter_mut().zip(g) {
                        *d += sv * gv;
                    }
                }
            }
            Op::Sum(x) => {
                if let Some(d) = slot!(*x) {
                    for d in d.iter_mut() {
                        *d += g[0];
                    }
                }
            }
            Op::SquaredError(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                let g0 = g[0];
                if let Some(d) = slot!(*a) {
                    for ((d, av), bv) in d.iter_mut().zip(av).zip(bv) {
                        *d += 2.0 * g0 * (av - bv);
                    }
                }
                if let Some(d) = slot!(*b) {
                    for ((d, av), bv) in d.iter_mut().zip(av).zip(bv) {
                        *d -= 2.0 * g0 * (av - bv);
                    }
                }
            }
            Op::L1(x) => {
                let xv = val(*x);
                let g0 = g[0];
                if let Some(d) = slot!(*x) {
                    for (d, xv) in d.iter_mut().zip(xv) {
                        if *xv != 0.0 {
                            *d += g0 * xv.signum();
                        }
                    }
                }
            }
            Op::Reshape(x) => {
                if let Some(d) = slot!(*x) {
                    add_into(d, g);
                }
            }
            Op::Apply { x, op } => {
                if let Some(d) = slot!(*x) {
                    let mut t = vec![0.0; op.in_len()];
                    op.adjoint_into(g, &mut t);
                    add_into(d, &t);
                }
            }
            Op::Adjoint { y, op } => {
                if let Some(d) = slot!(*y) {
                    let mut t = vec![0.0; op.out_len()];
                    op.apply_into(g, &mut t);
                    add_into(d, &t);
                }
            }
        }
    }
}


#[cfg(test)]
mod tests {
    use super::gradcheck::max_relative_error;
    use super::*;
    use crate::operators::MatrixOperator;
    use crate::rng::Rng;
    use crate::solvers::soft_threshold;
    use std::sync::Arc;

    fn random(rng: &mut Rng, dims: &[usize]) -> Tensor {
        let n = dims.iter().product();
        Tensor::from_vec(dims, (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    /// Random values kept at least `gap` away from each point in `kinks`.
    fn away_from(rng: &mut Rng, dims: &[usize], kinks: &[f64], gap: f64) -> Tensor {
        let n = dims.iter().product();
        let mut data = Vec::with_capacity(n);
        while data.len() < n {
            let v = rng.normal();
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                data.push(v);
            }
        }
        Tensor::from_vec(dims, data).unwrap()
    }

    fn weighted_sum(g: &mut Graph, x: NodeId, seed: u64) -> NodeId {
        // A random linear functional keeps gradients non-trivial.
        let mut rng = Rng::new(seed);
        let dims = g.value(x).dims().to_vec();
        let w = random(&mut rng, &dims);
        let w = g.constant(w);
        let m = g.mul(x, w).unwrap();
        g.sum(m)
    }

    #[test]
    fn conv_identity_and_zero_kernels() {
        let mut rng = Rng::new(1);
        let x = random(&mut rng, &[1, 2, 4, 5]);
        let mut delta = vec![0.0; 2 * 2 * 9];
        delta[(1 * 2 + 1) * 9 + 4] = 1.0; // out 1 <- in 1, centre tap
        let mut g = Graph::new();
        let xi = g.constant(x.clone());
        let k = g.constant(Tensor::from_vec(&[2, 2, 3, 3], delta).unwrap());
        let y = g.conv2d(xi, k).unwrap();
        assert_eq!(&g.value(y).as_slice()[20..], &x.as_slice()[20..]);
        assert!(g.value(y).as_slice()[..20].iter().all(|&v| v == 0.0));
        let kz = g.constant(Tensor::zeros(&[3, 2, 3, 3]).unwrap());
        let z = g.conv2d(xi, kz).unwrap();
        assert!(g.value(z).as_slice().iter().all(|&v| v == 0.0));
        let bad = g.constant(Tensor::zeros(&[3, 4, 3, 3]).unwrap());
        assert!(g.conv2d(xi, bad).is_err());
    }

    #[test]
    fn conv_gradcheck() {
        let mut rng = Rng::new(2);
        for trial in 0..20 {
            let x = random(&mut rng, &[1, 2, 5, 5]);
            let k = random(&mut rng, &[3, 2, 3, 3]);
            let err = max_relative_error(&[x, k], 1e-5, &|g, ids| {
                let y = g.conv2d(ids[0], ids[1]).unwrap();
                weighted_sum(g, y, trial)
            });
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn relu_values_and_kink_convention() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![-1.0, 2.0, 0.0]).unwrap(), true);
        let y = g.relu(x);
        assert_eq!(g.value(y).as_slice(), &[0.0, 2.0, 0.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn relu_gradcheck() {
        let mut rng = Rng::new(3);
        for trial in 0..20 {
            let x = away_from(&mut rng, &[12], &[0.0], 1e-3);
            let err = max_relative_error(&[x], 1e-5, &|g, ids| {
                let y = g.relu(ids[0]);
                weighted_sum(g, y, trial)
            });
            assert!(err <= 1e-6, "{err}");
        }
    }

    #[test]
    fn softplus_values() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
        // sp(30) - 30 = ln(1 + e^-30) ~ 9.357623e-14, up to one ulp of 30.
        let d = softplus(30.0) - 30.0;
        assert!(d <= 1e-13 && (d - 9.357_622_968_840_175e-14).abs() <= 30f64 * f64::EPSILON, "{d}");
        assert!(softplus(1000.0).is_finite() && softplus(-1000.0) == 0.0);
        assert_eq!(sigmoid(0.0), 0.5);
        for y in [1e-3, 0.0789, 1.0, 7.5] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-14 * y.max(1.0));
        }
        let mut rng = Rng::new(4);
        for trial in 0..20 {
            let x = random(&mut rng, &[9]).scale(3.0);
            let err = max_relative_error(&[x], 1e-5, &|g, ids| {
                let y = g.softplus(ids[0]);
                weighted_sum(g, y, trial)
            });
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn soft_threshold_node_matches_classic_and_gradchecks() {
        let mut rng = Rng::new(5);
        let x = random(&mut rng, &[50]);
        let mut g = Graph::new();
        let xi = g.constant(x.clone());
        let th = g.constant(Tensor::scalar(0.4));
        let y = g.soft_threshold(xi, th).unwrap();
        let classic = soft_threshold(&x, 0.4).unwrap();
        let bits = |t: &Tensor| t.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(g.value(y)), bits(&classic));

        for trial in 0..20 {
            let theta = rng.uniform(0.1, 1.0);
            let x = away_from(&mut rng, &[15], &[theta, -theta], 1e-3);
            let err = max_relative_error(&[x, Tensor::scalar(theta)], 1e-5, &|g, ids| {
                let y = g.soft_threshold(ids[0], ids[1]).unwrap();
                weighted_sum(g, y, trial)
            });
            assert!(err <= 1e-5, "{err}");
        }

        // theta = 0 is the identity with pass-through gradient.
        let mut g = Graph::new();
        let xi = g.leaf(x.clone(), true);
        let th = g.constant(Tensor::scalar(0.0));
        let y = g.soft_threshold(xi, th).unwrap();
        assert_eq!(g.value(y), &x);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert!(g.grad(xi).unwrap().as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn arithmetic_gradchecks() {
        let mut rng = Rng::new(6);
        for trial in 0..20 {
            let a = random(&mut rng, &[2, 3]);
            let b = away_from(&mut rng, &[2, 3], &[0.0], 0.3);
            let s = Tensor::scalar(rng.normal());
            let err = max_relative_error(&[a, b, s], 1e-5, &|g, ids| {
                let p = g.add(ids[0], ids[1]).unwrap();
                let q = g.sub(p, ids[1]).unwrap();
                let q = g.sub(q, ids[0]).unwrap();
                let r = g.mul(ids[0], ids[1]).unwrap();
                let d = g.div(ids[0], ids[1]).unwrap();
                let sm = g.scalar_mul(ids[2], d).unwrap();
                let sc = g.scale(r, -1.5);
                let t = g.add(sm, sc).unwrap();
                let t = g.add(t, q).unwrap();
                let t = g.add(t, p).unwrap();
                let t = g.reshape(t, &[6]).unwrap();
                weighted_sum(g, t, trial)
            });
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn loss_values_and_gradcheck() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::vector(vec![-2.0, 3.0]).unwrap(), true);
        let l = g.l1_norm(x);
        assert_eq!(g.value(l).item(), 5.0);
        let m = g.mse(x, x).unwrap();
        assert_eq!(g.value(m).item(), 0.0);
        g.backward(m).unwrap();
        assert!(g.grad(x).unwrap().as_slice().iter().all(|&v| v == 0.0));

        let mut rng = Rng::new(7);
        for _ in 0..20 {
            let a = away_from(&mut rng, &[8], &[0.0], 1e-3);
            let b = random(&mut rng, &[8]);
            let err = max_relative_error(&[a, b], 1e-5, &|g, ids| {
                let m = g.mse(ids[0], ids[1]).unwrap();
                let l = g.l1_norm(ids[0]);
                let m = g.scale(m, 0.01);
                let l = g.scale(l, 0.001);
                g.add(m, l).unwrap()
            });
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn linear_operator_nodes() {
        let mut rng = Rng::new(8);
        let a = random(&mut rng, &[4, 6]);
        let op: SharedOperator = Arc::new(MatrixOperator::new(a).unwrap());
        for trial in 0..20 {
            let x = random(&mut rng, &[6]);
            let err = max_relative_error(&[x], 1e-5, &|g, ids| {
                let y = g.linear_apply(ids[0], &op).unwrap();
                let y = g.relu(y);
                let z = g.linear_adjoint(y, &op).unwrap();
                weighted_sum(g, z, trial)
            });
            assert!(err <= 1e-5, "{err}");
        }
    }

    #[test]
    fn backward_basics() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let y = g.scale(x, 3.0);
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 3.0);

        let mut g = Graph::new();
        let x = g.leaf(Tensor::scalar(2.0), true);
        let y = g.add(x, x).unwrap();
        g.backward(y).unwrap();
        assert_eq!(g.grad(x).unwrap().item(), 2.0);

        let v = g.leaf(Tensor::vector(vec![1.0, 2.0]).unwrap(), true);
        assert!(matches!(g.backward(v), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn second_backward_doubles_gradients() {
        let mut rng = Rng::new(9);
        let mut g = Graph::new();
        let x = g.leaf(random(&mut rng, &[1, 1, 4, 4]), true);
        let k = g.leaf(random(&mut rng, &[2, 1, 3, 3]), true);
        let y = g.conv2d(x, k).unwrap();
        let y = g.softplus(y);
        let loss = g.l1_norm(y);
        g.backward(loss).unwrap();
        let once = g.grad(k).unwrap().clone();
        g.backward(loss).unwrap();
        let twice = g.grad(k).unwrap();
        for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
            assert_eq!(2.0 * a, *b);
        }
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let c = g.constant(Tensor::scalar(1.0));
        let x = g.leaf(Tensor::scalar(2.0), true);
        let y = g.mul(c, x).unwrap();
        g.backward(y).unwrap();
        assert!(g.grad(c).is_none());
        assert_eq!(g.grad(x).unwrap().item(), 1.0);
    }
}
