//! The corruption objective shared by whole-network and per-sample training.
//!
//! For an input `x`, mask `a` and noise draws `eta_1..eta_K`:
//!
//! ```text
//! loss = (1/K) * sum_k CE(F(x_k), F(x)) - beta * mean(a)
//! x_k  = a * eta_k + (1 - a) * x
//! ```
//!
//! `F(x)` enters as a constant target; gradients flow only into `a`.

use crate::autodiff::{Tape, Var};
use crate::error::{LanError, Result};
use crate::lan::mask::AttentionMask;
use crate::lan::noise::NoiseSource;
use crate::nn::loss::cross_entropy_on_tape;
use crate::nn::{forward_on_tape, Checkpoint, Mode};
use crate::tensor::Tensor;

/// How a network or logit tensor of `len` values becomes a full-shape mask.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum MaskLayout {
    /// One value per input component.
    Direct,
    /// One value per pixel, repeated across `channels`.
    Tiled { channels: usize, h: usize, w: usize },
}

impl MaskLayout {
    pub fn for_input(input_shape: &[usize], len: usize) -> Result<Self> {
        let d: usize = input_shape.iter().product();
        if len == d {
            return Ok(MaskLayout::Direct);
        }
        if let [c, h, w] = *input_shape {
            if len == h * w {
                return Ok(MaskLayout::Tiled { channels: c, h, w });
            }
        }
        Err(LanError::shape(
            "mask layout",
            format!("{len} mask values cannot cover input {input_shape:?}"),
        ))
    }

    /// Shape of the free parameters for a per-sample mask.
    pub fn raw_len(input_shape: &[usize]) -> usize {
        match *input_shape {
            [c, h, w] if c > 1 => h * w,
            _ => input_shape.iter().product(),
        }
    }

    /// `(N, len)` raw values to `(N, ..input_shape)`.
    pub fn expand(self, tape: &mut Tape, raw: Var, input_shape: &[usize]) -> Result<Var> {
        let batch = tape.shape(raw)[0];
        let mut full = vec![batch];
        full.extend_from_slice(input_shape);
        match self {
            MaskLayout::Direct => tape.reshape(raw, &full),
            MaskLayout::Tiled { channels, h, w } => {
                let plane = tape.reshape(raw, &[batch, 1, h, w])?;
                let copies = vec![plane; channels];
                let tiled = tape.concat(&copies, 1)?;
                tape.reshape(tiled, &full)
            }
        }
    }
}

/// Records the objective for a batch. `inputs` and every element of `noise`
/// are `(N, ..d)`, `mask` is a tape node of the same shape and `target`
/// holds the clean outputs `(N, l)`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn objective_on_tape(
    tape: &mut Tape,
    model: &Checkpoint,
    model_params: &[Var],
    inputs: &Tensor,
    mask: Var,
    noise: &[Tensor],
    target: Var,
    beta: f32,
) -> Result<Var> {
    if noise.is_empty() {
        return Err(LanError::Contract("need at least one noise draw".into()));
    }
    if tape.shape(mask) != inputs.shape() {
        return Err(LanError::shape(
            "lan objective",
            format!("mask {:?} vs inputs {:?}", tape.shape(mask), inputs.shape()),
        ));
    }
    let x = tape.constant(inputs.clone())?;
    let mut total = None;
    for eta in noise {
        if eta.shape() != inputs.shape() {
            return Err(LanError::shape(
                "lan objective",
                format!("noise {:?} vs inputs {:?}", eta.shape(), inputs.shape()),
            ));
        }
        // x + a * (eta - x)
        let diff: Vec<f32> = eta
            .data()
            .iter()
            .zip(inputs.data())
            .map(|(e, xi)| e - xi)
            .collect();
        let diff = tape.constant(Tensor::new(inputs.shape().to_vec(), diff)?)?;
        let shift = tape.mul(mask, diff)?;
        let corrupted = tape.add(x, shift)?;
        let out = forward_on_tape(&model.spec, tape, model_params, corrupted, Mode::Eval, None)?;
        let ce = cross_entropy_on_tape(tape, out, target)?;
        total = Some(match total {
            None => ce,
            Some(acc) => tape.add(acc, ce)?,
        });
    }
    let fidelity = tape.scale(total.expect("non-empty"), 1.0 / noise.len() as f32)?;
    let mean_mask = tape.mean(mask)?;
    let penalty = tape.scale(mean_mask, -beta)?;
    tape.add(fidelity, penalty)
}

/// Monte Carlo estimate of the objective for one input and a fixed mask,
/// drawing `samples` noise vectors from `noise`.
pub fn lan_loss(
    model: &Checkpoint,
    x: &Tensor,
    mask: &AttentionMask,
    noise: &mut NoiseSource<'_>,
    beta: f32,
    samples: usize,
) -> Result<f32> {
    if samples == 0 {
        return Err(LanError::Config("noise samples per step must be >= 1".into()));
    }
    if mask.shape() != x.shape() {
        return Err(LanError::shape(
            "lan loss",
            format!("mask {:?} vs input {:?}", mask.shape(), x.shape()),
        ));
    }
    let clean = model.forward(x)?;
    let batch = Tensor::stack(&[x])?;
    let draws: Vec<Tensor> = (0..samples)
        .map(|_| Tensor::stack(&[&noise.sample()]))
        .collect::<Result<_>>()?;
    let mut tape = Tape::new();
    let params = model.bind(&mut tape, false)?;
    let m = tape.constant(Tensor::stack(&[mask.values()])?)?;
    let target = tape.constant(Tensor::stack(&[&clean])?)?;
    let loss = objective_on_tape(&mut tape, model, &params, &batch, m, &draws, target, beta)?;
    Ok(tape.value(loss).item())
}
