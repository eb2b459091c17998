//! Reverse-mode gradients against central differences of an independent
//! double-precision forward implementation.

use lankit::autodiff::{Tape, Var};
use lankit::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-3;
const REL_TOL: f64 = 1e-3;

#[derive(Clone, Debug)]
struct A {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl A {
    fn new(shape: &[usize], data: Vec<f64>) -> Self {
        assert_eq!(shape.iter().product::<usize>(), data.len());
        A { shape: shape.to_vec(), data }
    }

    fn map(&self, f: impl Fn(f64) -> f64) -> A {
        A::new(&self.shape, self.data.iter().map(|&v| f(v)).collect())
    }

    fn zip(&self, o: &A, f: impl Fn(f64, f64) -> f64) -> A {
        assert_eq!(self.shape, o.shape);
        A::new(&self.shape, self.data.iter().zip(&o.data).map(|(&a, &b)| f(a, b)).collect())
    }

    fn to_f32(&self) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&v| v as f32).collect()).unwrap()
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> A {
    let n = shape.iter().product();
    A::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect())
}

/// Random values kept at least `gap` away from zero (kinks and clamps).
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize], gap: f64) -> A {
    random(rng, shape, -1.0, 1.0).map(|v| if v.abs() < gap { v.signum() * gap + v } else { v })
}

mod reference {
    use super::A;

    pub fn matmul(a: &A, b: &A) -> A {
        let (m, k, n) = (a.shape[0], a.shape[1], b.shape[1]);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = (0..k).map(|p| a.data[i * k + p] * b.data[p * n + j]).sum();
            }
        }
        A::new(&[m, n], out)
    }

    /// Direct valid convolution over `(N,C,H,W)` with `(O,C,FH,FW)` filters.
    pub fn conv(x: &A, w: &A, stride: usize) -> A {
        let (nb, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (o, fh, fw) = (w.shape[0], w.shape[2], w.shape[3]);
        let (oh, ow) = ((h - fh) / stride + 1, (wd - fw) / stride + 1);
        let mut out = vec![0.0; nb * o * oh * ow];
        for b in 0..nb {
            for f in 0..o {
                for y in 0..oh {
                    for xx in 0..ow {
                        let mut acc = 0.0;
                        for ch in 0..c {
                            for dy in 0..fh {
                                for dx in 0..fw {
                                    let iv = x.data[((b * c + ch) * h + y * stride + dy) * wd + xx * stride + dx];
                                    let wv = w.data[((f * c + ch) * fh + dy) * fw + dx];
                                    acc += iv * wv;
                                }
                            }
                        }
                        out[((b * o + f) * oh + y) * ow + xx] = acc;
                    }
                }
            }
        }
        A::new(&[nb, o, oh, ow], out)
    }

    pub fn bias_add(x: &A, b: &A, axis: usize) -> A {
        let inner: usize = x.shape[axis + 1..].iter().product();
        let len = x.shape[axis];
        let mut out = x.clone();
        for (i, v) in out.data.iter_mut().enumerate() {
            *v += b.data[(i / inner) % len];
        }
        out
    }

    pub fn rows(x: &A, f: impl Fn(&[f64]) -> Vec<f64>) -> A {
        let row = *x.shape.last().unwrap();
        A::new(&x.shape, x.data.chunks(row).flat_map(|r| f(r)).collect())
    }

    pub fn softmax(x: &A) -> A {
        rows(x, |r| {
            let m = r.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = r.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.iter().map(|v| v / s).collect()
        })
    }

    pub fn normalize_rows(x: &A) -> A {
        rows(x, |r| {
            let d = r.iter().sum::<f64>().max(1.0);
            r.iter().map(|v| v / d).collect()
        })
    }

    pub fn sigmoid(v: f64) -> f64 {
        1.0 / (1.0 + (-v).exp())
    }

    pub fn leaky(v: f64) -> f64 {
        if v > 0.0 {
            v
        } else {
            0.1 * v
        }
    }

    /// Concatenation of rank-2 arrays along axis 1.
    pub fn concat_cols(parts: &[&A]) -> A {
        let rows = parts[0].shape[0];
        let cols: usize = parts.iter().map(|p| p.shape[1]).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let w = p.shape[1];
                out.extend_from_slice(&p.data[r * w..(r + 1) * w]);
            }
        }
        A::new(&[rows, cols], out)
    }

    pub fn weighted_sum(x: &A, w: &A) -> f64 {
        x.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
    }
}

/// Checks d(loss)/d(input) for every input element. `build` records the
/// graph on a tape given the input variables and returns the scalar loss;
/// `oracle` evaluates the same function in f64.
fn check(
    name: &str,
    inputs: &[A],
    build: impl Fn(&mut Tape, &[Var]) -> Var,
    oracle: impl Fn(&[A]) -> f64,
) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|a| tape.param(a.to_f32()).unwrap()).collect();
    let loss = build(&mut tape, &vars);
    let f_tape = tape.value(loss).item() as f64;
    let f_ref = oracle(inputs);
    assert!(
        (f_tape - f_ref).abs() <= 1e-4 * f_ref.abs().max(1.0),
        "{name}: forward {f_tape} vs reference {f_ref}"
    );
    let grads = tape.backward(loss).unwrap();
    for (which, (a, v)) in inputs.iter().zip(&vars).enumerate() {
        let g = grads.get(*v).expect("gradient for every parameter");
        assert_eq!(g.shape(), a.shape.as_slice(), "{name}: gradient shape");
        for i in 0..a.data.len() {
            let mut plus = inputs.to_vec();
            plus[which].data[i] += EPS;
            let mut minus = inputs.to_vec();
            minus[which].data[i] -= EPS;
            let numeric = (oracle(&plus) - oracle(&minus)) / (2.0 * EPS);
            let analytic = g.data()[i] as f64;
            let err = (analytic - numeric).abs();
            assert!(
                err <= REL_TOL * analytic.abs().max(numeric.abs()),
                "{name}: input {which} element {i}: autodiff {analytic} vs finite difference {numeric}"
            );
        }
    }
}

fn weights(seed: u64, shape: &[usize]) -> A {
    random(&mut ChaCha8Rng::seed_from_u64(seed), shape, -1.0, 1.0)
}

/// `sum(w * out)` on the tape, with `w` a fixed constant.
fn project(tape: &mut Tape, out: Var, w: &A) -> Var {
    let wv = tape.constant(w.to_f32()).unwrap();
    let p = tape.mul(out, wv).unwrap();
    tape.sum(p).unwrap()
}

fn elementwise_check(name: &str, x: A, f32_op: fn(&mut Tape, Var) -> Var, f64_op: fn(f64) -> f64) {
    let w = weights(99, &x.shape);
    let w2 = w.clone();
    check(
        name,
        &[x],
        move |t, v| {
            let y = f32_op(t, v[0]);
            project(t, y, &w)
        },
        move |a| reference::weighted_sum(&a[0].map(f64_op), &w2),
    );
}

#[test]
pub fn binary_elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (a, b) = (random(&mut rng, &[3, 4], -1.0, 1.0), random(&mut rng, &[3, 4], -1.0, 1.0));
    let w = weights(2, &[3, 4]);
    for (name, op) in [("add", 0), ("sub", 1), ("mul", 2)] {
        let (wa, wb) = (w.clone(), w.clone());
        check(
            name,
            &[a.clone(), b.clone()],
            move |t, v| {
                let y = match op {
                    0 => t.add(v[0], v[1]),
                    1 => t.sub(v[0], v[1]),
                    _ => t.mul(v[0], v[1]),
                }
                .unwrap();
                project(t, y, &wa)
            },
            move |x| {
                let y = x[0].zip(&x[1], |p, q| match op {
                    0 => p + q,
                    1 => p - q,
                    _ => p * q,
                });
                reference::weighted_sum(&y, &wb)
            },
        );
    }
}

#[test]
pub fn unary_elementwise_ops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    elementwise_check("scale", random(&mut rng, &[2, 5], -1.0, 1.0), |t, v| t.scale(v, -2.5).unwrap(), |x| -2.5 * x);
    elementwise_check(
        "leaky-relu",
        away_from_zero(&mut rng, &[2, 5], 0.05),
        |t, v| t.leaky_relu(v, 0.1).unwrap(),
        reference::leaky,
    );
    elementwise_check("sigmoid", random(&mut rng, &[2, 5], -3.0, 3.0), |t, v| t.sigmoid(v).unwrap(), reference::sigmoid);
    elementwise_check("tanh", random(&mut rng, &[2, 5], -2.0, 2.0), |t, v| t.tanh(v).unwrap(), f64::tanh);
    elementwise_check("log", random(&mut rng, &[2, 5], 0.2, 3.0), |t, v| t.log(v).unwrap(), f64::ln);
}

#[test]
pub fn reductions_and_reshape() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[3, 4], -1.0, 1.0);
    check("sum", &[x.clone()], |t, v| t.sum(v[0]).unwrap(), |a| a[0].data.iter().sum());
    check(
        "mean",
        &[x.clone()],
        |t, v| t.mean(v[0]).unwrap(),
        |a| a[0].data.iter().sum::<f64>() / 12.0,
    );
    let w = weights(5, &[2, 6]);
    let w2 = w.clone();
    check(
        "reshape",
        &[x],
        move |t, v| {
            let r = t.reshape(v[0], &[2, 6]).unwrap();
            project(t, r, &w)
        },
        move |a| reference::weighted_sum(&A::new(&[2, 6], a[0].data.clone()), &w2),
    );
}

#[test]
pub fn matmul() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (a, b) = (random(&mut rng, &[3, 4], -1.0, 1.0), random(&mut rng, &[4, 5], -1.0, 1.0));
    let w = weights(7, &[3, 5]);
    let w2 = w.clone();
    check(
        "matmul",
        &[a, b],
        move |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            project(t, y, &w)
        },
        move |x| reference::weighted_sum(&reference::matmul(&x[0], &x[1]), &w2),
    );
}

#[test]
pub fn conv2d_batched_and_single() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (stride, (h, wd)) in [(1, (6, 5)), (2, (7, 8))] {
        let x = random(&mut rng, &[2, 2, h, wd], -1.0, 1.0);
        let f = random(&mut rng, &[3, 2, 3, 2], -1.0, 1.0);
        let out = reference::conv(&x, &f, stride);
        let w = weights(9, &out.shape);
        let w2 = w.clone();
        check(
            &format!("conv2d stride {stride}"),
            &[x, f],
            move |t, v| {
                let y = t.conv2d(v[0], v[1], stride).unwrap();
                project(t, y, &w)
            },
            move |a| reference::weighted_sum(&reference::conv(&a[0], &a[1], stride), &w2),
        );
    }
    // Rank-3 input (a single image).
    let x = random(&mut rng, &[1, 5, 5], -1.0, 1.0);
    let f = random(&mut rng, &[2, 1, 2, 2], -1.0, 1.0);
    let w = weights(10, &[2, 2, 2]);
    let w2 = w.clone();
    check(
        "conv2d single image",
        &[x, f],
        move |t, v| {
            let y = t.conv2d(v[0], v[1], 2).unwrap();
            project(t, y, &w)
        },
        move |a| {
            let batched = A::new(&[1, 1, 5, 5], a[0].data.clone());
            reference::weighted_sum(&reference::conv(&batched, &a[1], 2), &w2)
        },
    );
}

#[test]
pub fn bias_add_on_each_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = random(&mut rng, &[2, 3, 4], -1.0, 1.0);
    for axis in 0..3 {
        let b = random(&mut rng, &[x.shape[axis]], -1.0, 1.0);
        let w = weights(12 + axis as u64, &x.shape);
        let w2 = w.clone();
        check(
            &format!("bias-add axis {axis}"),
            &[x.clone(), b],
            move |t, v| {
                let y = t.bias_add(v[0], v[1], axis).unwrap();
                project(t, y, &w)
            },
            move |a| reference::weighted_sum(&reference::bias_add(&a[0], &a[1], axis), &w2),
        );
    }
}

#[test]
pub fn softmax_concat_and_row_normalisation() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let x = random(&mut rng, &[3, 5], -2.0, 2.0);
    let w = weights(16, &[3, 5]);
    let w2 = w.clone();
    check(
        "softmax",
        &[x],
        move |t, v| {
            let y = t.softmax(v[0]).unwrap();
            project(t, y, &w)
        },
        move |a| reference::weighted_sum(&reference::softmax(&a[0]), &w2),
    );

    let (p, q) = (random(&mut rng, &[2, 3], -1.0, 1.0), random(&mut rng, &[2, 2], -1.0, 1.0));
    let w = weights(17, &[2, 5]);
    let w2 = w.clone();
    check(
        "concat",
        &[p, q],
        move |t, v| {
            let y = t.concat(&[v[0], v[1]], 1).unwrap();
            project(t, y, &w)
        },
        move |a| reference::weighted_sum(&reference::concat_cols(&[&a[0], &a[1]]), &w2),
    );

    // Row sums above 1 (divided) and below 1 (left alone).
    let big = random(&mut rng, &[2, 4], 0.5, 2.0);
    let small = random(&mut rng, &[2, 4], 0.0, 0.2);
    for (name, x) in [("normalize-rows (divided)", big), ("normalize-rows (passthrough)", small)] {
        let w = weights(18, &[2, 4]);
        let w2 = w.clone();
        check(
            name,
            &[x],
            move |t, v| {
                let y = t.normalize_rows(v[0]).unwrap();
                project(t, y, &w)
            },
            move |a| reference::weighted_sum(&reference::normalize_rows(&a[0]), &w2),
        );
    }
}

/// Depth 6: matmul, bias, leaky ReLU, matmul, softmax, log, weighted sum
/// (a cross-entropy against fixed soft targets).
#[test]
pub fn composite_mlp_cross_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let x = random(&mut rng, &[4, 5], -1.0, 1.0);
    let w1 = random(&mut rng, &[5, 6], -1.0, 1.0);
    let b1 = random(&mut rng, &[6], -0.5, 0.5);
    let w2 = random(&mut rng, &[6, 3], -1.0, 1.0);
    let target = reference::softmax(&random(&mut rng, &[4, 3], -1.0, 1.0));
    let tgt = target.clone();
    check(
        "composite mlp",
        &[x, w1, b1, w2],
        move |t, v| {
            let h = t.matmul(v[0], v[1]).unwrap();
            let h = t.bias_add(h, v[2], 1).unwrap();
            let h = t.leaky_relu(h, 0.1).unwrap();
            let o = t.matmul(h, v[3]).unwrap();
            let p = t.softmax(o).unwrap();
            let l = t.log(p).unwrap();
            let s = project(t, l, &tgt);
            t.scale(s, -0.25).unwrap()
        },
        move |a| {
            let h = reference::bias_add(&reference::matmul(&a[0], &a[1]), &a[2], 1).map(reference::leaky);
            let p = reference::softmax(&reference::matmul(&h, &a[3]));
            -0.25 * reference::weighted_sum(&p.map(f64::ln), &target)
        },
    );
}

/// Depth 7: conv, bias, tanh, reshape, matmul, sigmoid, mean.
#[test]
pub fn composite_conv_sigmoid() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let x = random(&mut rng, &[2, 1, 6, 6], -1.0, 1.0);
    let f = random(&mut rng, &[2, 1, 2, 2], -1.0, 1.0);
    let b = random(&mut rng, &[2], -0.5, 0.5);
    let w = random(&mut rng, &[18, 4], -0.5, 0.5);
    check(
        "composite conv",
        &[x, f, b, w],
        |t, v| {
            let c = t.conv2d(v[0], v[1], 2).unwrap();
            let c = t.bias_add(c, v[2], 1).unwrap();
            let c = t.tanh(c).unwrap();
            let flat = t.reshape(c, &[2, 18]).unwrap();
            let o = t.matmul(flat, v[3]).unwrap();
            let s = t.sigmoid(o).unwrap();
            t.mean(s).unwrap()
        },
        |a| {
            let c = reference::bias_add(&reference::conv(&a[0], &a[1], 2), &a[2], 1).map(f64::tanh);
            let flat = A::new(&[2, 18], c.data);
            let s = reference::matmul(&flat, &a[3]).map(reference::sigmoid);
            s.data.iter().sum::<f64>() / s.data.len() as f64
        },
    );
}

/// Depth 8: the corruption objective's shape: sigmoid mask, blend of input
/// and noise, concat, row normalisation, matmul, softmax, log, penalty.
#[test]
pub fn composite_masked_blend() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let z = random(&mut rng, &[2, 4], -2.0, 2.0);
    let x = random(&mut rng, &[2, 4], 0.0, 1.0);
    let eta = random(&mut rng, &[2, 4], 0.0, 1.0);
    let extra = random(&mut rng, &[2, 2], 0.0, 1.0);
    let w = random(&mut rng, &[6, 3], -1.0, 1.0);
    let tgt = reference::softmax(&random(&mut rng, &[2, 3], -1.0, 1.0));
    let tgt2 = tgt.clone();
    check(
        "composite masked blend",
        &[z, x, eta, extra, w],
        move |t, v| {
            let a = t.sigmoid(v[0]).unwrap();
            let diff = t.sub(v[2], v[1]).unwrap();
            let shift = t.mul(a, diff).unwrap();
            let blended = t.add(v[1], shift).unwrap();
            let joined = t.concat(&[blended, v[3]], 1).unwrap();
            let n = t.normalize_rows(joined).unwrap();
            let o = t.matmul(n, v[4]).unwrap();
            let p = t.softmax(o).unwrap();
            let l = t.log(p).unwrap();
            let ce = project(t, l, &tgt);
            let ce = t.scale(ce, -0.5).unwrap();
            let m = t.mean(a).unwrap();
            let pen = t.scale(m, -2.0).unwrap();
            t.add(ce, pen).unwrap()
        },
        move |a| {
            let m = a[0].map(reference::sigmoid);
            let blended = A::new(
                &[2, 4],
                (0..8).map(|i| a[1].data[i] + m.data[i] * (a[2].data[i] - a[1].data[i])).collect(),
            );
            let n = reference::normalize_rows(&reference::concat_cols(&[&blended, &a[3]]));
            let p = reference::softmax(&reference::matmul(&n, &a[4]));
            let ce = -0.5 * reference::weighted_sum(&p.map(f64::ln), &tgt2);
            ce - 2.0 * m.data.iter().sum::<f64>() / 8.0
        },
    );
}
