use rand::Rng as _;

use crate::autodiff::{Tape, Var, LEAKY_SLOPE};
use crate::error::{LanError, Result};
use crate::nn::spec::{Activation, Flow, LayerSpec, NetworkSpec};
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
}

/// Whether dropout is active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A network spec together with its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub params: Vec<Param>,
    pub seed: u64,
    pub iteration: u64,
}

/// Name and shape of every parameter a spec owns, in storage order.
pub fn parameter_layout(spec: &NetworkSpec) -> Result<Vec<(String, Vec<usize>)>> {
    let (_, layers) = spec.trace()?;
    let mut out = Vec::new();
    for (i, p) in layers.iter().enumerate() {
        if let Some(p) = p {
            out.push((format!("layer{i}.weight"), p.weight.clone()));
            out.push((format!("layer{i}.bias"), vec![p.bias]));
        }
    }
    Ok(out)
}

/// Glorot-uniform weights, zero biases. Deterministic in `seed`.
pub fn init_parameters(spec: &NetworkSpec, seed: u64) -> Result<Vec<Param>> {
    let (_, layers) = spec.trace()?;
    let mut rng = seed::rng_for(seed, seed::stream::INIT);
    let mut params = Vec::new();
    for (i, p) in layers.iter().enumerate() {
        let Some(p) = p else { continue };
        let bound = (6.0 / (p.fan_in + p.fan_out) as f64).sqrt() as f32;
        let n: usize = p.weight.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        params.push(Param {
            name: format!("layer{i}.weight"),
            value: Tensor::new(p.weight.clone(), data)?,
        });
        params.push(Param {
            name: format!("layer{i}.bias"),
            value: Tensor::zeros(&[p.bias]),
        });
    }
    Ok(params)
}

/// Feeds a batch `(N, ..input_shape)` through the network recorded on `tape`.
/// `params` are the tape handles of the checkpoint parameters, in order.
pub fn forward_on_tape(
    spec: &NetworkSpec,
    tape: &mut Tape,
    params: &[Var],
    input: Var,
    mode: Mode,
    mut dropout_rng: Option<&mut Rng>,
) -> Result<Var> {
    let (flows, _) = spec.trace()?;
    let in_shape = tape.shape(input).to_vec();
    let per_sample = spec.input_len();
    if in_shape.is_empty() || in_shape[1..].iter().product::<usize>() != per_sample
        || in_shape[1..] != spec.input_shape[..]
    {
        return Err(LanError::shape(
            "forward",
            format!(
                "batch {in_shape:?} does not match input shape {:?}",
                spec.input_shape
            ),
        ));
    }
    let batch = in_shape[0];
    let mut x = input;
    if spec.normalize_input {
        x = tape.reshape(x, &[batch, per_sample])?;
        x = tape.normalize_rows(x)?;
    }
    let mut next_param = 0;
    for (layer, flow) in spec.layers.iter().zip(&flows) {
        match *layer {
            LayerSpec::Conv {
                stride, activation, ..
            } => {
                let Flow::Spatial { c, h, w } = *flow else {
                    unreachable!("trace checked spatial input")
                };
                x = tape.reshape(x, &[batch, c, h, w])?;
                let (wv, bv) = (params[next_param], params[next_param + 1]);
                next_param += 2;
                x = tape.conv2d(x, wv, stride)?;
                x = tape.bias_add(x, bv, 1)?;
                x = activate(tape, x, activation)?;
            }
            LayerSpec::FullyConnected { activation, .. } => {
                let features = tape.value(x).len() / batch;
                x = tape.reshape(x, &[batch, features])?;
                let (wv, bv) = (params[next_param], params[next_param + 1]);
                next_param += 2;
                x = tape.matmul(x, wv)?;
                x = tape.bias_add(x, bv, 1)?;
                x = activate(tape, x, activation)?;
            }
            LayerSpec::Dropout { keep_prob } => {
                if mode == Mode::Train && keep_prob < 1.0 {
                    let rng = dropout_rng.as_deref_mut().ok_or_else(|| {
                        LanError::Contract("training-mode dropout needs a random stream".into())
                    })?;
                    let shape = tape.shape(x).to_vec();
                    let n: usize = shape.iter().product();
                    let scale = 1.0 / keep_prob;
                    let keep: Vec<f32> = (0..n)
                        .map(|_| if rng.gen::<f32>() < keep_prob { scale } else { 0.0 })
                        .collect();
                    let m = tape.constant(Tensor::new(shape, keep)?)?;
                    x = tape.mul(x, m)?;
                }
            }
        }
    }
    let out_len = tape.value(x).len() / batch;
    tape.reshape(x, &[batch, out_len])
}

fn activate(tape: &mut Tape, x: Var, activation: Activation) -> Result<Var> {
    match activation {
        Activation::LeakyRelu => tape.leaky_relu(x, LEAKY_SLOPE),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Tanh => tape.tanh(x),
        Activation::Softmax => tape.softmax(x),
        Activation::Identity => Ok(x),
    }
}

impl Checkpoint {
    pub fn initialize(spec: NetworkSpec, seed: u64) -> Result<Self> {
        let params = init_parameters(&spec, seed)?;
        Ok(Checkpoint {
            spec,
            params,
            seed,
            iteration: 0,
        })
    }

    /// Records every parameter on `tape`; `trainable` decides whether they
    /// receive gradients.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Result<Vec<Var>> {
        self.params
            .iter()
            .map(|p| tape.leaf(p.value.clone(), trainable))
            .collect()
    }

    pub fn output_dim(&self) -> Result<usize> {
        self.spec.output_dim()
    }

    /// Evaluation-mode output for one input.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = self.forward_batch(&[x])?;
        Ok(out.swap_remove(0))
    }

    /// Evaluation-mode outputs for several inputs, in input order.
    pub fn forward_batch(&self, xs: &[&Tensor]) -> Result<Vec<Tensor>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        for x in xs {
            if x.shape() != self.spec.input_shape.as_slice() {
                return Err(LanError::shape(
                    "forward",
                    format!("input {:?} vs expected {:?}", x.shape(), self.spec.input_shape),
                ));
            }
        }
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false)?;
        let input = tape.constant(Tensor::stack(xs)?)?;
        let out = forward_on_tape(&self.spec, &mut tape, &params, input, Mode::Eval, None)?;
        Ok(tape.value(out).unstack())
    }

    /// Training-mode output for one input (dropout active).
    pub fn forward_train(&self, x: &Tensor, rng: &mut Rng) -> Result<Tensor> {
        let mut tape = Tape::new();
        let params = self.bind(&mut tape, false)?;
        let input = tape.constant(Tensor::stack(&[x])?)?;
        let out = forward_on_tape(&self.spec, &mut tape, &params, input, Mode::Train, Some(rng))?;
        Ok(tape.value(out).unstack().swap_remove(0))
    }

    /// Index of the most probable class.
    pub fn classify(&self, x: &Tensor) -> Result<usize> {
        Ok(self.forward(x)?.argmax())
    }

    /// Predicted classes in chunks of `chunk`, in input order.
    pub fn classify_all(&self, xs: &[Tensor], chunk: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(xs.len());
        for c in xs.chunks(chunk.max(1)) {
            let refs: Vec<&Tensor> = c.iter().collect();
            out.extend(self.forward_batch(&refs)?.iter().map(Tensor::argmax));
        }
        Ok(out)
    }

    /// Fraction of `xs` classified as `labels`.
    pub fn accuracy(&self, xs: &[Tensor], labels: &[usize]) -> Result<f64> {
        let preds = self.classify_all(xs, 256)?;
        let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(hits as f64 / xs.len().max(1) as f64)
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.value)
    }
}
