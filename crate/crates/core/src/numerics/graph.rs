//! Tape-based reverse-mode differentiation.
//!
//! A [`Graph`] records every operation as a node in creation order, so node
//! indices are already a topological order. [`Graph::backward`] walks the tape
//! in reverse, propagating gradients into a scratch buffer per node, and adds
//! the result into the persistent gradients of leaves created with
//! `requires_grad`. Calling it twice without [`Graph::zero_grad`] therefore
//! doubles leaf gradients.

use std::hash::{DefaultHasher, Hash, Hasher};

use super::conv::{self, ConvGeom, PoolGeom};
use super::gemm;
use super::tensor::{split_axis, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        input: Var,
        weight: Var,
        bias: Var,
        geom: ConvGeom,
    },
    MaxPool2d {
        input: Var,
        argmax: Vec<usize>,
    },
    Linear {
        input: Var,
        weight: Var,
        bias: Option<Var>,
    },
    LeakyRelu {
        input: Var,
        slope: f64,
    },
    Sigmoid(Var),
    Tanh(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Sum(Var),
    LogSoftmax(Var),
    NllLoss {
        input: Var,
        targets: Vec<usize>,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    Repeat {
        input: Var,
        times: usize,
        axis: usize,
    },
    Reshape(Var),
    Slice {
        input: Var,
        axis: usize,
        start: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
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

    /// Adds an input tensor. Gradients are only retained for leaves.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let node = &self.nodes[v.0];
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn zero_grad(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    /// Hash of the linear piece every LeakyReLU (input signs) and max-pool
    /// (selected elements) is on. Two evaluations of the same computation
    /// with equal signatures lie on the same smooth piece of it.
    pub fn piece_signature(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu { input, .. } => {
                    for &v in self.nodes[input.0].value.data() {
                        (v >= 0.0).hash(&mut h);
                    }
                }
                Op::MaxPool2d { argmax, .. } => argmax.hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Var, stride: (usize, usize)) -> Result<Var> {
        let geom = ConvGeom::new(self.shape(input), self.shape(weight), stride)?;
        if self.shape(bias) != [geom.cout] {
            return Err(Error::shape(format!(
                "conv2d bias must be [{}], got {:?}",
                geom.cout,
                self.shape(bias)
            )));
        }
        let out = conv::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(weight).data(),
            self.value(bias).data(),
        );
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(value, Op::Conv2d { input, weight, bias, geom }, &[input, weight, bias]))
    }

    pub fn maxpool2d(&mut self, input: Var, kernel: (usize, usize), stride: (usize, usize)) -> Result<Var> {
        let shape = conv::maxpool2d_output_shape(self.shape(input), kernel, stride)?;
        let geom = PoolGeom::new(self.shape(input), kernel, stride)?;
        let (out, argmax) = conv::maxpool2d_forward(&geom, self.value(input).data());
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::MaxPool2d { input, argmax }, &[input]))
    }

    /// `input[N,Din] · weightᵀ + bias`, with `weight` shaped `[Dout,Din]`.
    pub fn linear(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let (xs, ws) = (self.shape(input), self.shape(weight));
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return Err(Error::shape(format!(
                "linear expects input [N,Din] and weight [Dout,Din], got {xs:?} and {ws:?}"
            )));
        }
        let (n, din, dout) = (xs[0], xs[1], ws[0]);
        let mut out = vec![0.0; n * dout];
        if let Some(b) = bias {
            let bv = self.value(b);
            if bv.shape() != [dout] {
                return Err(Error::shape(format!(
                    "linear bias must be [{dout}], got {:?}",
                    bv.shape()
                )));
            }
            for row in out.chunks_exact_mut(dout) {
                row.copy_from_slice(bv.data());
            }
        }
        gemm::nt(n, din, dout, self.value(input).data(), self.value(weight).data(), &mut out, bias.is_some());
        let value = Tensor::new(vec![n, dout], out)?;
        let mut inputs = vec![input, weight];
        inputs.extend(bias);
        Ok(self.push(value, Op::Linear { input, weight, bias }, &inputs))
    }

    pub fn leaky_relu(&mut self, input: Var, slope: f64) -> Var {
        let x = self.value(input);
        let out: Vec<f64> = x.data().iter().map(|&v| if v >= 0.0 { v } else { slope * v }).collect();
        let value = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::LeakyRelu { input, slope }, &[input])
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let out: Vec<f64> = x.data().iter().map(|&v| sigmoid(v)).collect();
        let value = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Sigmoid(input), &[input])
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        let x = self.value(input);
        let out: Vec<f64> = x.data().iter().map(|v| v.tanh()).collect();
        let value = Tensor::new(x.shape().to_vec(), out).expect("same shape");
        self.push(value, Op::Tanh(input), &[input])
    }

    fn same_shape(&self, op: &str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(format!(
                "{op} needs equal shapes, got {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out: Vec<f64> = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), out)?;
        Ok(self.push(value, Op::Mul(a, b), &[a, b]))
    }

    /// Sum of all elements, as a scalar.
    pub fn sum(&mut self, input: Var) -> Var {
        let total = self.value(input).data().iter().sum();
        self.push(Tensor::scalar(total), Op::Sum(input), &[input])
    }

    /// Row-wise log-softmax of a `[N,C]` tensor using max subtraction.
    pub fn log_softmax(&mut self, input: Var) -> Result<Var> {
        let x = self.value(input);
        if x.ndim() != 2 || x.shape()[1] < 2 {
            return Err(Error::shape(format!("log_softmax expects [N,C>=2], got {:?}", x.shape())));
        }
        let c = x.shape()[1];
        let mut out = Vec::with_capacity(x.numel());
        for row in x.data().chunks_exact(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|v| v - lse));
        }
        let value = Tensor::new(x.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LogSoftmax(input), &[input]))
    }

    /// Mean negative log-likelihood of `targets` under row-wise log-probabilities.
    pub fn nll_loss(&mut self, input: Var, targets: &[usize]) -> Result<Var> {
        let x = self.value(input);
        if x.ndim() != 2 {
            return Err(Error::shape(format!("nll_loss expects [N,C], got {:?}", x.shape())));
        }
        let (n, c) = (x.shape()[0], x.shape()[1]);
        if targets.len() != n {
            return Err(Error::shape(format!("nll_loss got {} targets for {n} rows", targets.len())));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
            return Err(Error::validation(format!("target class {bad} out of range for {c} classes")));
        }
        let loss = -targets.iter().enumerate().map(|(i, &t)| x.data()[i * c + t]).sum::<f64>() / n as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::NllLoss {
                input,
                targets: targets.to_vec(),
            },
            &[input],
        ))
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape(format!("concat axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::shape(format!("concat along axis {axis}: {base:?} vs {s:?}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&base, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let value = Tensor::new(shape, out)?;
        Ok(self.push(
            value,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    /// Tiles the tensor `times` times along `axis` (`[a,b] -> [a,b,a,b,...]`).
    pub fn repeat(&mut self, input: Var, times: usize, axis: usize) -> Result<Var> {
        let x = self.value(input);
        if axis >= x.ndim() || times == 0 {
            return Err(Error::shape(format!(
                "repeat x{times} along axis {axis} invalid for {:?}",
                x.shape()
            )));
        }
        let (outer, dim, inner) = split_axis(x.shape(), axis);
        let block = dim * inner;
        let mut out = Vec::with_capacity(x.numel() * times);
        for o in 0..outer {
            let src = &x.data()[o * block..(o + 1) * block];
            for _ in 0..times {
                out.extend_from_slice(src);
            }
        }
        let mut shape = x.shape().to_vec();
        shape[axis] *= times;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Repeat { input, times, axis }, &[input]))
    }

    pub fn reshape(&mut self, input: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(input).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(input), &[input]))
    }

    /// Collapses every axis from `from_axis` onward into one.
    pub fn flatten(&mut self, input: Var, from_axis: usize) -> Result<Var> {
        let s = self.shape(input);
        if from_axis >= s.len() {
            return Err(Error::shape(format!("flatten from axis {from_axis} invalid for {s:?}")));
        }
        let mut shape = s[..from_axis].to_vec();
        shape.push(s[from_axis..].iter().product());
        self.reshape(input, &shape)
    }

    /// Takes `len` entries starting at `start` along `axis`.
    pub fn slice(&mut self, input: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let x = self.value(input);
        if axis >= x.ndim() || len == 0 || start + len > x.shape()[axis] {
            return Err(Error::shape(format!(
                "slice [{start}..{}] along axis {axis} invalid for {:?}",
                start + len,
                x.shape()
            )));
        }
        let (outer, dim, inner) = split_axis(x.shape(), axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * dim + start) * inner;
            out.extend_from_slice(&x.data()[base..base + len * inner]);
        }
        let mut shape = x.shape().to_vec();
        shape[axis] = len;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Slice { input, axis, start }, &[input]))
    }

    /// Populates gradients of `requires_grad` leaves with d(loss)/d(leaf).
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.requires_grad(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }
        for (i, g) in grads.into_iter().enumerate() {
            let (Some(g), node) = (g, &mut self.nodes[i]) else { continue };
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let buf = |grads: &mut [Option<Vec<f64>>], v: Var| -> Option<*mut Vec<f64>> {
            if !nodes[v.0].requires_grad {
                return None;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; nodes[v.0].value.numel()]);
            Some(slot as *mut Vec<f64>)
        };
        // Each op's inputs are distinct nodes except where noted, so the raw
        // pointers obtained below never alias one another.
        let y = &nodes[i].value;
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { input, weight, bias, geom } => {
                let dx = buf(grads, *input);
                let dw = buf(grads, *weight);
                let db = buf(grads, *bias);
                // SAFETY: input, weight and bias are distinct nodes.
                unsafe {
                    conv::conv2d_backward(
                        geom,
                        nodes[input.0].value.data(),
                        nodes[weight.0].value.data(),
                        gy,
                        dx.map(|p| (*p).as_mut_slice()),
                        dw.map(|p| (*p).as_mut_slice()),
                        db.map(|p| (*p).as_mut_slice()),
                    );
                }
            }
            Op::MaxPool2d { input, argmax } => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    for (&src, g) in argmax.iter().zip(gy) {
                        dx[src] += g;
                    }
                }
            }
            Op::Linear { input, weight, bias } => {
                let xs = nodes[input.0].value.shape();
                let (n, din) = (xs[0], xs[1]);
                let dout = nodes[weight.0].value.shape()[0];
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    gemm::nn(n, dout, din, gy, nodes[weight.0].value.data(), dx, true);
                }
                if let Some(dw) = buf(grads, *weight) {
                    let dw = unsafe { &mut *dw };
                    gemm::tn(dout, n, din, gy, nodes[input.0].value.data(), dw, true);
                }
                if let Some(b) = bias {
                    if let Some(db) = buf(grads, *b) {
                        let db = unsafe { &mut *db };
                        for row in gy.chunks_exact(dout) {
                            db.iter_mut().zip(row).for_each(|(d, g)| *d += g);
                        }
                    }
                }
            }
            Op::LeakyRelu { input, slope } => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    let x = nodes[input.0].value.data();
                    for ((d, &xv), g) in dx.iter_mut().zip(x).zip(gy) {
                        *d += if xv >= 0.0 { *g } else { slope * g };
                    }
                }
            }
            Op::Sigmoid(input) => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    for ((d, s), g) in dx.iter_mut().zip(y.data()).zip(gy) {
                        *d += g * s * (1.0 - s);
                    }
                }
            }
            Op::Tanh(input) => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    for ((d, t), g) in dx.iter_mut().zip(y.data()).zip(gy) {
                        *d += g * (1.0 - t * t);
                    }
                }
            }
            Op::Add(a, b) => {
                // a == b is allowed: each borrow is released before the next.
                for v in [a, b] {
                    if let Some(d) = buf(grads, *v) {
                        let d = unsafe { &mut *d };
                        d.iter_mut().zip(gy).for_each(|(d, g)| *d += g);
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (nodes[a.0].value.data(), nodes[b.0].value.data());
                if let Some(d) = buf(grads, *a) {
                    let d = unsafe { &mut *d };
                    for ((d, g), o) in d.iter_mut().zip(gy).zip(bv) {
                        *d += g * o;
                    }
                }
                if let Some(d) = buf(grads, *b) {
                    let d = unsafe { &mut *d };
                    for ((d, g), o) in d.iter_mut().zip(gy).zip(av) {
                        *d += g * o;
                    }
                }
            }
            Op::Sum(input) => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    dx.iter_mut().for_each(|d| *d += gy[0]);
                }
            }
            Op::LogSoftmax(input) => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    let c = y.shape()[1];
                    for ((drow, yrow), grow) in dx.chunks_exact_mut(c).zip(y.data().chunks_exact(c)).zip(gy.chunks_exact(c)) {
                        let gsum: f64 = grow.iter().sum();
                        for ((d, lp), g) in drow.iter_mut().zip(yrow).zip(grow) {
                            *d += g - lp.exp() * gsum;
                        }
                    }
                }
            }
            Op::NllLoss { input, targets } => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    let c = nodes[input.0].value.shape()[1];
                    let scale = gy[0] / targets.len() as f64;
                    for (row, &t) in targets.iter().enumerate() {
                        dx[row * c + t] -= scale;
                    }
                }
            }
            Op::Concat { inputs, axis } => {
                let (outer, _, inner) = split_axis(y.shape(), *axis);
                let out_block = y.shape()[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let block = nodes[v.0].value.shape()[*axis] * inner;
                    if let Some(d) = buf(grads, *v) {
                        let d = unsafe { &mut *d };
                        for o in 0..outer {
                            let src = &gy[o * out_block + offset..o * out_block + offset + block];
                            d[o * block..(o + 1) * block].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                        }
                    }
                    offset += block;
                }
            }
            Op::Repeat { input, times, axis } => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    let (outer, dim, inner) = split_axis(nodes[input.0].value.shape(), *axis);
                    let block = dim * inner;
                    for o in 0..outer {
                        let dst = &mut dx[o * block..(o + 1) * block];
                        for r in 0..*times {
                            let src = &gy[(o * times + r) * block..(o * times + r + 1) * block];
                            dst.iter_mut().zip(src).for_each(|(d, g)| *d += g);
                        }
                    }
                }
            }
            Op::Reshape(input) => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    dx.iter_mut().zip(gy).for_each(|(d, g)| *d += g);
                }
            }
            Op::Slice { input, axis, start } => {
                if let Some(dx) = buf(grads, *input) {
                    let dx = unsafe { &mut *dx };
                    let (outer, dim, inner) = split_axis(nodes[input.0].value.shape(), *axis);
                    let len = y.shape()[*axis];
                    for o in 0..outer {
                        let base = (o * dim + start) * inner;
                        let src = &gy[o * len * inner..(o + 1) * len * inner];
                        dx[base..base + len * inner].iter_mut().zip(src).for_each(|(d, g)| *d += g);
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_all_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2, 3], &[1.0, -2.0, 3.0, 0.5, 0.0, 7.0]), true);
        let s = g.sum(x);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[1.0; 6]);
    }

    #[test]
    fn second_backward_doubles_gradients() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[0.3, -0.7, 1.1]), true);
        let y = g.tanh(x);
        let z = g.mul(y, x).unwrap();
        let s = g.sum(z);
        g.backward(s).unwrap();
        let once = g.grad(x).unwrap();
        g.backward(s).unwrap();
        let twice = g.grad(x).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert_eq!(2.0 * a, *b);
        }
        g.zero_grad();
        assert!(g.grad(x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true);
        let y = g.tanh(x);
        assert!(matches!(g.backward(y), Err(Error::Shape(_))));
    }

    #[test]
    fn leaky_relu_definition() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[-1.0, 0.0, 2.0]), true);
        let y = g.leaky_relu(x, 0.01);
        assert_eq!(g.value(y).data(), &[-0.01, 0.0, 2.0]);
        let s = g.sum(y);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[0.01, 1.0, 1.0]);
    }

    #[test]
    fn log_softmax_uniform_and_stable() {
        let mut g = Graph::new();
        let x = g.constant(t(&[2, 3], &[0.0, 0.0, 0.0, 1000.0, 0.0, -1000.0]));
        let y = g.log_softmax(x).unwrap();
        let v = g.value(y).data();
        for &lp in &v[..3] {
            assert!((lp - (1.0f64 / 3.0).ln()).abs() < 1e-15);
        }
        assert!(v.iter().all(|x| x.is_finite()));
        assert_eq!(v[3], 0.0);
    }

    #[test]
    fn nll_loss_values_and_errors() {
        let mut g = Graph::new();
        let perfect = g.constant(t(&[1, 2], &[0.0, f64::MIN]));
        let l = g.nll_loss(perfect, &[0]).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.0);

        let third = (1.0f64 / 3.0).ln();
        let uni = g.constant(t(&[2, 3], &[third; 6]));
        let l = g.nll_loss(uni, &[0, 2]).unwrap();
        assert!((g.value(l).item().unwrap() - 3f64.ln()).abs() < 1e-12);
        assert!(g.nll_loss(uni, &[0, 3]).is_err());
    }

    #[test]
    fn shape_algebra_of_fusion_rows() {
        let mut g = Graph::new();
        let pose = g.constant(Tensor::zeros(&[100, 20]));
        let rep = g.repeat(pose, 29, 1).unwrap();
        assert_eq!(g.shape(rep), &[100, 580]);
        let face = g.constant(Tensor::zeros(&[100, 578]));
        let cat = g.concat(&[face, rep], 1).unwrap();
        assert_eq!(g.shape(cat), &[100, 1158]);
        let maps = g.constant(Tensor::zeros(&[100, 16, 34, 34]));
        let flat = g.flatten(maps, 1).unwrap();
        assert_eq!(g.shape(flat), &[100, 18496]);
    }

    #[test]
    fn repeat_tiles_and_sums_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]), true);
        let r = g.repeat(x, 3, 1).unwrap();
        assert_eq!(g.value(r).data(), &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0, 3.0, 4.0, 3.0, 4.0, 3.0, 4.0]);
        let s = g.sum(r);
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap().data(), &[3.0; 4]);
    }

    #[test]
    fn identity_kernel_and_weight() {
        let mut g = Graph::new();
        let data: Vec<f64> = (0..25).map(|i| i as f64 * 0.3 - 2.0).collect();
        let x = g.constant(t(&[1, 1, 5, 5], &data));
        let w = g.constant(t(&[1, 1, 1, 1], &[1.0]));
        let b = g.constant(t(&[1], &[0.0]));
        let y = g.conv2d(x, w, b, (1, 1)).unwrap();
        assert_eq!(g.value(y).data(), &data[..]);

        let x = g.constant(t(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let eye = g.constant(Tensor::from_fn(&[3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
        let zero = g.constant(Tensor::zeros(&[3]));
        let y = g.linear(x, eye, Some(zero)).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn maxpool_gradient_goes_to_first_of_ties() {
        let mut g = Graph::new();
        let x = g.leaf(Tensor::full(&[1, 1, 4, 4], 2.0), true);
        let p = g.maxpool2d(x, (2, 2), (2, 2)).unwrap();
        let s = g.sum(p);
        g.backward(s).unwrap();
        let grad = g.grad(x).unwrap();
        let want = [1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        assert_eq!(grad.data(), &want);
    }

    #[test]
    fn pool_shapes_from_table_rows() {
        let mut g = Graph::new();
        let x = g.constant(Tensor::zeros(&[100, 16, 69, 69]));
        let p = g.maxpool2d(x, (2, 2), (2, 2)).unwrap();
        assert_eq!(g.shape(p), &[100, 16, 34, 34]);
        let x = g.constant(Tensor::zeros(&[100, 16, 14, 3]));
        let p = g.maxpool2d(x, (2, 1), (2, 1)).unwrap();
        assert_eq!(g.shape(p), &[100, 16, 7, 3]);
        let x = g.constant(Tensor::zeros(&[1, 1, 1, 3]));
        assert!(g.maxpool2d(x, (2, 2), (2, 2)).is_err());
    }
}
