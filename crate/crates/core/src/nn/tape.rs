//! Recording tape for reverse-mode differentiation.
//!
//! Forward ops append nodes holding their outputs (and whatever context
//! backward needs, e.g. im2col buffers); [`Tape::backward`] walks the nodes
//! in reverse and accumulates gradients. Constants recorded with
//! `requires_grad = false` act as stop-gradients, which is how detached
//! target-network values enter a loss.

use super::kernels::{self, ConvGeom};
use super::tensor::Tensor;
use super::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(pub(crate) usize);

enum Op<T> {
    Leaf,
    Conv2d { geom: ConvGeom, cols: Vec<T> },
    Linear,
    Relu,
    LeakyRelu { slope: T },
    Sigmoid,
    Reshape,
    ConcatCols { widths: Vec<usize> },
    SliceRows { start_row: usize },
    GatherCol { indices: Vec<usize> },
    Sub,
    Sum,
    HalfMeanSq,
}

struct Node<T> {
    op: Op<T>,
    inputs: Vec<ValueId>,
    value: Tensor<T>,
    needs_grad: bool,
    trainable: bool,
}

/// Gradients keyed by tape node, produced by [`Tape::backward`].
pub struct Grads<T> {
    by_node: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Grads<T> {
    pub fn get(&self, id: ValueId) -> Option<&[T]> {
        self.by_node.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, id: ValueId) -> Option<Vec<T>> {
        self.by_node.get_mut(id.0).and_then(|g| g.take())
    }
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Tape<T> {
        Tape { nodes: Vec::new() }
    }

    pub fn value(&self, id: ValueId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<T>, inputs: Vec<ValueId>, value: Tensor<T>) -> ValueId {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value,
            needs_grad,
            trainable: false,
        });
        ValueId(self.nodes.len() - 1)
    }

    /// Record a trainable leaf (a parameter).
    pub fn param(&mut self, value: &Tensor<T>) -> ValueId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            value: value.clone(),
            needs_grad: true,
            trainable: true,
        });
        ValueId(self.nodes.len() - 1)
    }

    /// Record a non-trainable leaf (data or a detached value).
    pub fn constant(&mut self, value: Tensor<T>) -> ValueId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: vec![],
            value,
            needs_grad: false,
            trainable: false,
        });
        ValueId(self.nodes.len() - 1)
    }

    /// Convolution over channels-last input (batch, h, w, c) with weights
    /// (out_c, k, k, c) and bias (out_c). Output (batch, oh, ow, out_c).
    pub fn conv2d(&mut self, x: ValueId, w: ValueId, b: ValueId, stride: usize) -> ValueId {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 4, "conv2d input must be 4-d, got {xs:?}");
        assert_eq!(ws.len(), 4, "conv2d weight must be 4-d, got {ws:?}");
        assert_eq!(xs[3], ws[3], "channel mismatch: input {xs:?} weight {ws:?}");
        assert_eq!(ws[1], ws[2], "only square kernels supported");
        let geom = ConvGeom {
            batch: xs[0],
            in_h: xs[1],
            in_w: xs[2],
            in_c: xs[3],
            k: ws[1],
            stride,
            out_c: ws[0],
        };
        assert!(geom.in_h >= geom.k && geom.in_w >= geom.k, "kernel larger than input");
        let (out, cols) = kernels::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            &geom,
        );
        let value = Tensor::new(vec![geom.batch, geom.out_h(), geom.out_w(), geom.out_c], out);
        self.push(Op::Conv2d { geom, cols }, vec![x, w, b], value)
    }

    /// y = x W^T + b for x (n, in), W (out, in), b (out).
    pub fn linear(&mut self, x: ValueId, w: ValueId, b: ValueId) -> ValueId {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        assert_eq!(xs.len(), 2, "linear input must be 2-d");
        assert_eq!(ws.len(), 2, "linear weight must be 2-d");
        assert_eq!(xs[1], ws[1], "fan-in mismatch: input {xs:?} weight {ws:?}");
        let out = kernels::linear_forward(
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
            xs[0],
            ws[1],
            ws[0],
        );
        let value = Tensor::new(vec![xs[0], ws[0]], out);
        self.push(Op::Linear, vec![x, w, b], value)
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            kernels::relu(self.value(x).data()),
        );
        self.push(Op::Relu, vec![x], value)
    }

    pub fn leaky_relu(&mut self, x: ValueId, slope: T) -> ValueId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            kernels::leaky_relu(self.value(x).data(), slope),
        );
        self.push(Op::LeakyRelu { slope }, vec![x], value)
    }

    pub fn sigmoid(&mut self, x: ValueId) -> ValueId {
        let value = Tensor::new(
            self.value(x).shape().to_vec(),
            kernels::sigmoid(self.value(x).data()),
        );
        self.push(Op::Sigmoid, vec![x], value)
    }

    pub fn reshape(&mut self, x: ValueId, shape: Vec<usize>) -> ValueId {
        let value = Tensor::new(shape, self.value(x).data().to_vec());
        self.push(Op::Reshape, vec![x], value)
    }

    /// Concatenate 2-d inputs along columns; all must share the row count.
    pub fn concat_cols(&mut self, parts: &[ValueId]) -> ValueId {
        assert!(!parts.is_empty());
        let rows = self.value(parts[0]).shape()[0];
        let widths: Vec<usize> = parts
            .iter()
            .map(|&p| {
                let s = self.value(p).shape();
                assert_eq!(s.len(), 2);
                assert_eq!(s[0], rows, "concat_cols row mismatch");
                s[1]
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![T::zero(); rows * total];
        let mut col = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                data[r * total + col..r * total + col + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            col += w;
        }
        let value = Tensor::new(vec![rows, total], data);
        self.push(Op::ConcatCols { widths }, parts.to_vec(), value)
    }

    /// Select a contiguous row range from a 2-d tensor.
    pub fn slice_rows(&mut self, x: ValueId, start_row: usize, rows: usize) -> ValueId {
        let s = self.value(x).shape().to_vec();
        assert_eq!(s.len(), 2);
        assert!(start_row + rows <= s[0], "slice_rows out of range");
        let cols = s[1];
        let data = self.value(x).data()[start_row * cols..(start_row + rows) * cols].to_vec();
        let value = Tensor::new(vec![rows, cols], data);
        self.push(Op::SliceRows { start_row }, vec![x], value)
    }

    /// Pick one column per row: out[i] = x[i, indices[i]].
    pub fn gather_col(&mut self, x: ValueId, indices: Vec<usize>) -> ValueId {
        let s = self.value(x).shape().to_vec();
        assert_eq!(s.len(), 2);
        assert_eq!(indices.len(), s[0]);
        let data: Vec<T> = indices
            .iter()
            .enumerate()
            .map(|(r, &c)| {
                assert!(c < s[1], "gather index out of range");
                self.value(x).data()[r * s[1] + c]
            })
            .collect();
        let value = Tensor::new(vec![s[0]], data);
        self.push(Op::GatherCol { indices }, vec![x], value)
    }

    pub fn sub(&mut self, a: ValueId, b: ValueId) -> ValueId {
        assert_eq!(self.value(a).shape(), self.value(b).shape());
        let data: Vec<T> = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| x - y)
            .collect();
        let value = Tensor::new(self.value(a).shape().to_vec(), data);
        self.push(Op::Sub, vec![a, b], value)
    }

    pub fn sum(&mut self, x: ValueId) -> ValueId {
        let mut acc = 0.0f64;
        for &v in self.value(x).data() {
            acc += v.to_f64();
        }
        let value = Tensor::scalar(T::from_f64(acc));
        self.push(Op::Sum, vec![x], value)
    }

    /// loss = mean(r^2) / 2, the empirical Bellman loss reduction.
    pub fn half_mean_sq(&mut self, x: ValueId) -> ValueId {
        let data = self.value(x).data();
        let mut acc = 0.0f64;
        for &v in data {
            acc += v.to_f64() * v.to_f64();
        }
        let value = Tensor::scalar(T::from_f64(0.5 * acc / data.len() as f64));
        self.push(Op::HalfMeanSq, vec![x], value)
    }

    /// Reverse pass from a scalar loss. Returns gradients for every node
    /// that needed them; trainable leaves are the ones callers care about.
    pub fn backward(&self, loss: ValueId) -> Grads<T> {
        assert_eq!(self.value(loss).len(), 1, "backward requires a scalar loss");
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad || grads[id].is_none() {
                continue;
            }
            if node.inputs.is_empty() {
                continue;
            }
            // Inputs always precede their consumers on the tape.
            let (lower, upper) = grads.split_at_mut(id);
            let dy = upper[0].as_ref().unwrap();
            self.backward_node(id, dy, lower);
        }

        Grads { by_node: grads }
    }

    fn take_grad(&self, grads: &mut [Option<Vec<T>>], id: ValueId) -> Vec<T> {
        grads[id.0]
            .take()
            .unwrap_or_else(|| vec![T::zero(); self.nodes[id.0].value.len()])
    }

    fn backward_node(&self, id: usize, dy: &[T], grads: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id];
        let needs = |i: usize| self.nodes[node.inputs[i].0].needs_grad;
        // Per-input gradient buffers are taken out of the slot table and put
        // back, so repeated inputs accumulate correctly and no aliasing can
        // occur.
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { geom, cols } => {
                let (x_id, w_id, b_id) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                debug_assert!(x_id != w_id && w_id != b_id && x_id != b_id);
                let w = self.nodes[w_id.0].value.data();
                let mut dw = self.take_grad(grads, w_id);
                let mut db = self.take_grad(grads, b_id);
                if needs(0) {
                    let mut dx = self.take_grad(grads, x_id);
                    kernels::conv2d_backward(dy, cols, w, geom, &mut dw, &mut db, Some(&mut dx));
                    grads[x_id.0] = Some(dx);
                } else {
                    kernels::conv2d_backward(dy, cols, w, geom, &mut dw, &mut db, None);
                }
                grads[w_id.0] = Some(dw);
                grads[b_id.0] = Some(db);
            }
            Op::Linear => {
                let (x_id, w_id, b_id) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                debug_assert!(x_id != w_id && w_id != b_id && x_id != b_id);
                let x = self.nodes[x_id.0].value.data();
                let w = self.nodes[w_id.0].value.data();
                let (n, din) = {
                    let s = self.nodes[x_id.0].value.shape();
                    (s[0], s[1])
                };
                let dout = self.nodes[w_id.0].value.shape()[0];
                let mut dw = self.take_grad(grads, w_id);
                let mut db = self.take_grad(grads, b_id);
                if needs(0) {
                    let mut dx = self.take_grad(grads, x_id);
                    kernels::linear_backward(dy, x, w, n, din, dout, &mut dw, &mut db, Some(&mut dx));
                    grads[x_id.0] = Some(dx);
                } else {
                    kernels::linear_backward(dy, x, w, n, din, dout, &mut dw, &mut db, None);
                }
                grads[w_id.0] = Some(dw);
                grads[b_id.0] = Some(db);
            }
            Op::Relu => {
                if needs(0) {
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    kernels::relu_backward(dy, node.value.data(), &mut dx);
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::LeakyRelu { slope } => {
                if needs(0) {
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    kernels::leaky_relu_backward(dy, node.value.data(), *slope, &mut dx);
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::Sigmoid => {
                if needs(0) {
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    kernels::sigmoid_backward(dy, node.value.data(), &mut dx);
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::Reshape => {
                if needs(0) {
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    for (g, &d) in dx.iter_mut().zip(dy) {
                        *g += d;
                    }
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::ConcatCols { widths } => {
                let total: usize = widths.iter().sum();
                let rows = node.value.shape()[0];
                let mut col = 0;
                for (i, &w) in widths.iter().enumerate() {
                    if needs(i) {
                        let mut dx = self.take_grad(grads, node.inputs[i]);
                        for r in 0..rows {
                            for c in 0..w {
                                dx[r * w + c] += dy[r * total + col + c];
                            }
                        }
                        grads[node.inputs[i].0] = Some(dx);
                    }
                    col += w;
                }
            }
            Op::SliceRows { start_row } => {
                if needs(0) {
                    let cols = node.value.shape()[1];
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    let offset = start_row * cols;
                    for (i, &d) in dy.iter().enumerate() {
                        dx[offset + i] += d;
                    }
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::GatherCol { indices } => {
                if needs(0) {
                    let cols = self.nodes[node.inputs[0].0].value.shape()[1];
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    for (r, &c) in indices.iter().enumerate() {
                        dx[r * cols + c] += dy[r];
                    }
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::Sub => {
                if needs(0) {
                    let mut da = self.take_grad(grads, node.inputs[0]);
                    for (g, &d) in da.iter_mut().zip(dy) {
                        *g += d;
                    }
                    grads[node.inputs[0].0] = Some(da);
                }
                if needs(1) {
                    let mut db = self.take_grad(grads, node.inputs[1]);
                    for (g, &d) in db.iter_mut().zip(dy) {
                        *g -= d;
                    }
                    grads[node.inputs[1].0] = Some(db);
                }
            }
            Op::Sum => {
                if needs(0) {
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    for g in dx.iter_mut() {
                        *g += dy[0];
                    }
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
            Op::HalfMeanSq => {
                if needs(0) {
                    let x = self.nodes[node.inputs[0].0].value.data();
                    let n = T::from_f64(x.len() as f64);
                    let mut dx = self.take_grad(grads, node.inputs[0]);
                    for (g, &r) in dx.iter_mut().zip(x) {
                        *g += dy[0] * r / n;
                    }
                    grads[node.inputs[0].0] = Some(dx);
                }
            }
        }
    }
}
