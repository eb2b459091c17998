//! Tape-based reverse-mode automatic differentiation.
//!
//! Every operation appends a node holding its output value to a [`Tape`];
//! [`Tape::backward`] walks the nodes in reverse and applies each node's
//! vector-Jacobian product. Nodes remember whether any of their inputs needs
//! a gradient, so constant subgraphs (frozen network weights, data, noise)
//! are never differentiated.
//!
//! Elementwise binary ops require identical shapes. The only broadcast is
//! [`Tape::bias_add`], which adds a vector along one axis.

use crate::error::{LanError, Result};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Negative slope used by every leaky-ReLU in the toolkit.
pub const LEAKY_SLOPE: f32 = 0.1;

/// Lower clamp applied inside [`Tape::log`].
pub const LOG_FLOOR: f32 = 1e-12;

/// Sigmoid outputs are kept this far from 0 and 1 so masks stay strictly
/// inside the unit interval even when the logits saturate in `f32`.
pub const SIGMOID_MARGIN: f32 = 1e-7;

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f32),
    MatMul(Var, Var),
    Conv2d { input: Var, filter: Var, stride: usize },
    BiasAdd { input: Var, bias: Var, axis: usize },
    LeakyRelu(Var, f32),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Concat { inputs: Vec<Var>, axis: usize },
    NormalizeRows(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation. Confined to one thread; build a fresh tape per step.
#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradient slots produced by [`Tape::backward`], one per node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` was reachable
    /// from the loss and required a gradient.
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

struct Conv2dDims {
    batch: usize,
    channels: usize,
    height: usize,
    width: usize,
    out_channels: usize,
    fh: usize,
    fw: usize,
    oh: usize,
    ow: usize,
}

impl Conv2dDims {
    fn patch(&self) -> usize {
        self.channels * self.fh * self.fw
    }
    fn positions(&self) -> usize {
        self.oh * self.ow
    }
}

fn conv_dims(input: &[usize], filter: &[usize], stride: usize) -> Result<Conv2dDims> {
    let (batch, c, h, w) = match *input {
        [c, h, w] => (1, c, h, w),
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(LanError::shape(
                "conv2d",
                format!("input must be (C,H,W) or (N,C,H,W), got {input:?}"),
            ))
        }
    };
    let [o, fc, fh, fw] = *filter else {
        return Err(LanError::shape(
            "conv2d",
            format!("filter must be (out, in, fh, fw), got {filter:?}"),
        ));
    };
    if fc != c {
        return Err(LanError::shape(
            "conv2d",
            format!("filter expects {fc} input channels, input has {c}"),
        ));
    }
    if stride == 0 || fh > h || fw > w {
        return Err(LanError::shape(
            "conv2d",
            format!("filter {fh}x{fw} stride {stride} does not fit input {h}x{w}"),
        ));
    }
    Ok(Conv2dDims {
        batch,
        channels: c,
        height: h,
        width: w,
        out_channels: o,
        fh,
        fw,
        oh: (h - fh) / stride + 1,
        ow: (w - fw) / stride + 1,
    })
}

/// `c[m×n] += a[m×k] · b[k×n]` with arbitrary strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (isize, isize),
    b: &[f32],
    (rsb, csb): (isize, isize),
    c: &mut [f32],
    beta: f32,
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: the callers size `a`, `b` and `c` from the same dimensions and
    // strides passed here; `c` is row-major with row stride `n`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(input: &[f32], d: &Conv2dDims, stride: usize, cols: &mut [f32]) {
    let p = d.positions();
    for c in 0..d.channels {
        for ky in 0..d.fh {
            for kx in 0..d.fw {
                let row = ((c * d.fh + ky) * d.fw + kx) * p;
                for oy in 0..d.oh {
                    let src = (c * d.height + oy * stride + ky) * d.width + kx;
                    let dst = row + oy * d.ow;
                    for ox in 0..d.ow {
                        cols[dst + ox] = input[src + ox * stride];
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f32], d: &Conv2dDims, stride: usize, out: &mut [f32]) {
    let p = d.positions();
    for c in 0..d.channels {
        for ky in 0..d.fh {
            for kx in 0..d.fw {
                let row = ((c * d.fh + ky) * d.fw + kx) * p;
                for oy in 0..d.oh {
                    let dst = (c * d.height + oy * stride + ky) * d.width + kx;
                    let src = row + oy * d.ow;
                    for ox in 0..d.ow {
                        out[dst + ox * stride] += cols[src + ox];
                    }
                }
            }
        }
    }
}

fn sigmoid(v: f32) -> f32 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &[f32], row: usize) -> Vec<f32> {
    let mut out = vec![0.0; x.len()];
    for (src, dst) in x.chunks(row).zip(out.chunks_mut(row)) {
        let max = src.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        let mut total = 0.0;
        for (d, &s) in dst.iter_mut().zip(src) {
            *d = (s - max).exp();
            total += *d;
        }
        for d in dst.iter_mut() {
            *d /= total;
        }
    }
    out
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn accumulate(slot: &mut Option<Tensor>, shape: &[usize], contrib: impl FnOnce(&mut [f32])) {
    let g = slot.get_or_insert_with(|| Tensor::zeros(shape));
    contrib(g.data_mut());
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn shape(&self, var: Var) -> &[usize] {
        self.nodes[var.0].value.shape()
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Records an input. `requires_grad` marks it as something the caller
    /// wants a gradient for.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if !value.is_finite() {
            return Err(LanError::NumericDomain {
                context: "leaf input".into(),
            });
        }
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, true)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(LanError::NumericDomain {
                context: name.into(),
            });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(LanError::shape(op, format!("{sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f32, f32) -> f32) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data).expect("same shape")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.zip_with(a, b, |x, y| x + y);
        self.push("add", v, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("subtract", a, b)?;
        let v = self.zip_with(a, b, |x, y| x - y);
        self.push("subtract", v, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("multiply", a, b)?;
        let v = self.zip_with(a, b, |x, y| x * y);
        self.push("multiply", v, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f32) -> Result<Var> {
        let v = self.value(a).map(|x| x * s);
        self.push("scale", v, Op::Scale(a, s), &[a])
    }

    /// `(m×k) · (k×n)`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let (&[m, k], &[k2, n]) = (&sa[..], &sb[..]) else {
            return Err(LanError::shape(
                "matmul",
                format!("expected two matrices, got {sa:?} and {sb:?}"),
            ));
        };
        if k != k2 {
            return Err(LanError::shape(
                "matmul",
                format!("inner dimensions differ: {sa:?} x {sb:?}"),
            ));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            (k as isize, 1),
            self.value(b).data(),
            (n as isize, 1),
            &mut out,
            0.0,
        );
        let v = Tensor::new(vec![m, n], out)?;
        self.push("matmul", v, Op::MatMul(a, b), &[a, b])
    }

    /// Valid (unpadded) 2-D convolution. Input is `(C,H,W)` or `(N,C,H,W)`,
    /// filter is `(out, in, fh, fw)`.
    pub fn conv2d(&mut self, input: Var, filter: Var, stride: usize) -> Result<Var> {
        let d = conv_dims(self.shape(input), self.shape(filter), stride)?;
        let (r, p) = (d.patch(), d.positions());
        let in_size = d.channels * d.height * d.width;
        let out_size = d.out_channels * p;
        let mut out = vec![0.0; d.batch * out_size];
        let mut cols = vec![0.0; r * p];
        let x = self.value(input).data();
        let w = self.value(filter).data();
        for b in 0..d.batch {
            im2col(&x[b * in_size..(b + 1) * in_size], &d, stride, &mut cols);
            gemm(
                d.out_channels,
                r,
                p,
                w,
                (r as isize, 1),
                &cols,
                (p as isize, 1),
                &mut out[b * out_size..(b + 1) * out_size],
                0.0,
            );
        }
        let shape = if self.value(input).rank() == 3 {
            vec![d.out_channels, d.oh, d.ow]
        } else {
            vec![d.batch, d.out_channels, d.oh, d.ow]
        };
        let v = Tensor::new(shape, out)?;
        self.push("conv2d", v, Op::Conv2d { input, filter, stride }, &[input, filter])
    }

    /// Adds `bias` (a vector) along `axis` of `input`.
    pub fn bias_add(&mut self, input: Var, bias: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(input).to_vec();
        if axis >= shape.len() || self.shape(bias) != [shape[axis]] {
            return Err(LanError::shape(
                "bias-add",
                format!(
                    "bias {:?} does not match axis {axis} of {shape:?}",
                    self.shape(bias)
                ),
            ));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let b = self.value(bias).data();
        let mut data = self.value(input).data().to_vec();
        for o in 0..outer {
            for (i, &bv) in b.iter().enumerate().take(len) {
                let start = (o * len + i) * inner;
                for v in &mut data[start..start + inner] {
                    *v += bv;
                }
            }
        }
        let v = Tensor::new(shape, data)?;
        self.push("bias-add", v, Op::BiasAdd { input, bias, axis }, &[input, bias])
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f32) -> Result<Var> {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { slope * x });
        self.push("leaky-relu", v, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let v = self
            .value(a)
            .map(|x| sigmoid(x).clamp(SIGMOID_MARGIN, 1.0 - SIGMOID_MARGIN));
        self.push("sigmoid", v, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(f32::tanh);
        self.push("tanh", v, Op::Tanh(a), &[a])
    }

    /// Softmax over the last axis, max-subtracted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let row = *t.shape().last().expect("rank >= 1");
        let v = Tensor::new(t.shape().to_vec(), softmax_rows(t.data(), row))?;
        self.push("softmax", v, Op::Softmax(a), &[a])
    }

    /// Natural log with the argument clamped to at least [`LOG_FLOOR`].
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).map(|x| x.max(LOG_FLOOR).ln());
        self.push("log", v, Op::Log(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        self.push("sum", v, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).mean());
        self.push("mean", v, Op::Mean(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let v = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", v, Op::Reshape(a), &[a])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = inputs
            .first()
            .ok_or_else(|| LanError::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(LanError::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(LanError::shape("concat", format!("{s:?} vs {base:?} on axis {axis}")));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&base, axis);
        let mut data = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.shape()[axis] * inner;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let v = Tensor::new(shape, data)?;
        self.push("concat", v, Op::Concat { inputs: inputs.to_vec(), axis }, inputs)
    }

    /// Divides each last-axis row by `max(row sum, 1)`.
    pub fn normalize_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let row = *t.shape().last().expect("rank >= 1");
        let mut data = t.data().to_vec();
        for chunk in data.chunks_mut(row) {
            let d = chunk.iter().sum::<f32>().max(1.0);
            for v in chunk {
                *v /= d;
            }
        }
        let v = Tensor::new(t.shape().to_vec(), data)?;
        self.push("normalize-rows", v, Op::NormalizeRows(a), &[a])
    }

    /// Back-propagates from a one-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.value(loss).is_scalar() {
            return Err(LanError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::ones(self.shape(loss)));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (slot, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *slot = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let gd = g.data();
        match *op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.wants(a) {
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y)
                    });
                }
                if self.wants(b) {
                    accumulate(&mut grads[b.0], g.shape(), |d| {
                        d.iter_mut().zip(gd).for_each(|(x, &y)| *x += sign * y)
                    });
                }
            }
            Op::Mul(a, b) => {
                for (this, other) in [(a, b), (b, a)] {
                    if self.wants(this) {
                        let od = self.value(other).data();
                        accumulate(&mut grads[this.0], g.shape(), |d| {
                            for ((x, &y), &o) in d.iter_mut().zip(gd).zip(od) {
                                *x += y * o;
                            }
                        });
                    }
                }
            }
            Op::Scale(a, s) => {
                if self.wants(a) {
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        d.iter_mut().zip(gd).for_each(|(x, &y)| *x += s * y)
                    });
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(a)[0], self.shape(a)[1]);
                let n = self.shape(b)[1];
                if self.wants(a) {
                    // dA = G · Bᵀ
                    let bd = self.value(b).data();
                    accumulate(&mut grads[a.0], &[m, k], |d| {
                        gemm(m, n, k, gd, (n as isize, 1), bd, (1, n as isize), d, 1.0)
                    });
                }
                if self.wants(b) {
                    // dB = Aᵀ · G
                    let ad = self.value(a).data();
                    accumulate(&mut grads[b.0], &[k, n], |d| {
                        gemm(k, m, n, ad, (1, k as isize), gd, (n as isize, 1), d, 1.0)
                    });
                }
            }
            Op::Conv2d {
                input,
                filter,
                stride,
            } => {
                let d = conv_dims(self.shape(input), self.shape(filter), stride)
                    .expect("validated in forward");
                let (r, p) = (d.patch(), d.positions());
                let in_size = d.channels * d.height * d.width;
                let out_size = d.out_channels * p;
                let x = self.value(input).data();
                let w = self.value(filter).data();
                let want_in = self.wants(input);
                let want_w = self.wants(filter);
                let mut cols = vec![0.0; r * p];
                let mut dcols = vec![0.0; r * p];
                let mut dw = vec![0.0; d.out_channels * r];
                let mut dx = if want_in { vec![0.0; x.len()] } else { Vec::new() };
                for b in 0..d.batch {
                    let gb = &gd[b * out_size..(b + 1) * out_size];
                    if want_w {
                        im2col(&x[b * in_size..(b + 1) * in_size], &d, stride, &mut cols);
                        // dW += G · colsᵀ
                        gemm(
                            d.out_channels,
                            p,
                            r,
                            gb,
                            (p as isize, 1),
                            &cols,
                            (1, p as isize),
                            &mut dw,
                            1.0,
                        );
                    }
                    if want_in {
                        // dcols = Wᵀ · G
                        gemm(
                            r,
                            d.out_channels,
                            p,
                            w,
                            (1, r as isize),
                            gb,
                            (p as isize, 1),
                            &mut dcols,
                            0.0,
                        );
                        col2im(&dcols, &d, stride, &mut dx[b * in_size..(b + 1) * in_size]);
                    }
                }
                if want_w {
                    let shape = self.shape(filter).to_vec();
                    accumulate(&mut grads[filter.0], &shape, |s| {
                        s.iter_mut().zip(&dw).for_each(|(x, &y)| *x += y)
                    });
                }
                if want_in {
                    let shape = self.shape(input).to_vec();
                    accumulate(&mut grads[input.0], &shape, |s| {
                        s.iter_mut().zip(&dx).for_each(|(x, &y)| *x += y)
                    });
                }
            }
            Op::BiasAdd { input, bias, axis } => {
                if self.wants(input) {
                    accumulate(&mut grads[input.0], g.shape(), |d| {
                        d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y)
                    });
                }
                if self.wants(bias) {
                    let (outer, len, inner) = axis_split(g.shape(), axis);
                    accumulate(&mut grads[bias.0], &[len], |d| {
                        for o in 0..outer {
                            for (i, slot) in d.iter_mut().enumerate() {
                                let start = (o * len + i) * inner;
                                *slot += gd[start..start + inner].iter().sum::<f32>();
                            }
                        }
                    });
                }
            }
            Op::LeakyRelu(a, slope) => {
                if self.wants(a) {
                    let xd = self.value(a).data();
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((s, &y), &x) in d.iter_mut().zip(gd).zip(xd) {
                            *s += if x > 0.0 { y } else { slope * y };
                        }
                    });
                }
            }
            Op::Sigmoid(a) => {
                if self.wants(a) {
                    let od = out.data();
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((s, &y), &o) in d.iter_mut().zip(gd).zip(od) {
                            *s += y * o * (1.0 - o);
                        }
                    });
                }
            }
            Op::Tanh(a) => {
                if self.wants(a) {
                    let od = out.data();
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((s, &y), &o) in d.iter_mut().zip(gd).zip(od) {
                            *s += y * (1.0 - o * o);
                        }
                    });
                }
            }
            Op::Softmax(a) => {
                if self.wants(a) {
                    let row = *out.shape().last().expect("rank >= 1");
                    let od = out.data();
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((ds, gs), os) in
                            d.chunks_mut(row).zip(gd.chunks(row)).zip(od.chunks(row))
                        {
                            let dot: f32 = gs.iter().zip(os).map(|(x, y)| x * y).sum();
                            for ((s, &gy), &o) in ds.iter_mut().zip(gs).zip(os) {
                                *s += o * (gy - dot);
                            }
                        }
                    });
                }
            }
            Op::Log(a) => {
                if self.wants(a) {
                    let xd = self.value(a).data();
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((s, &y), &x) in d.iter_mut().zip(gd).zip(xd) {
                            if x >= LOG_FLOOR {
                                *s += y / x;
                            }
                        }
                    });
                }
            }
            Op::Sum(a) | Op::Mean(a) => {
                if self.wants(a) {
                    let shape = self.shape(a).to_vec();
                    let n = self.value(a).len() as f32;
                    let scale = if matches!(op, Op::Mean(_)) { gd[0] / n } else { gd[0] };
                    accumulate(&mut grads[a.0], &shape, |d| {
                        d.iter_mut().for_each(|x| *x += scale)
                    });
                }
            }
            Op::Reshape(a) => {
                if self.wants(a) {
                    let shape = self.shape(a).to_vec();
                    accumulate(&mut grads[a.0], &shape, |d| {
                        d.iter_mut().zip(gd).for_each(|(x, &y)| *x += y)
                    });
                }
            }
            Op::Concat { ref inputs, axis } => {
                let (outer, _, inner) = axis_split(out.shape(), axis);
                let total = out.shape()[axis] * inner;
                let mut offset = 0;
                for &v in inputs {
                    let width = self.shape(v)[axis] * inner;
                    if self.wants(v) {
                        let shape = self.shape(v).to_vec();
                        accumulate(&mut grads[v.0], &shape, |d| {
                            for o in 0..outer {
                                let src = &gd[o * total + offset..o * total + offset + width];
                                d[o * width..(o + 1) * width]
                                    .iter_mut()
                                    .zip(src)
                                    .for_each(|(x, &y)| *x += y);
                            }
                        });
                    }
                    offset += width;
                }
            }
            Op::NormalizeRows(a) => {
                if self.wants(a) {
                    let xd = self.value(a).data();
                    let row = *out.shape().last().expect("rank >= 1");
                    accumulate(&mut grads[a.0], g.shape(), |d| {
                        for ((ds, gs), xs) in
                            d.chunks_mut(row).zip(gd.chunks(row)).zip(xd.chunks(row))
                        {
                            let total: f32 = xs.iter().sum();
                            if total > 1.0 {
                                let dot: f32 = gs.iter().zip(xs).map(|(x, y)| x * y).sum();
                                for (s, &gy) in ds.iter_mut().zip(gs) {
                                    *s += gy / total - dot / (total * total);
                                }
                            } else {
                                ds.iter_mut().zip(gs).for_each(|(s, &gy)| *s += gy);
                            }
                        }
                    });
                }
            }
        }
    }
}
