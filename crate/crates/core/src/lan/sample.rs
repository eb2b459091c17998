use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{LanError, Result};
use crate::lan::mask::AttentionMask;
use crate::lan::noise::{NoiseKind, NoiseSource};
use crate::lan::objective::{objective_on_tape, MaskLayout};
use crate::nn::train::divergence;
use crate::nn::{AdamState, Checkpoint, Param};
use crate::tensor::Tensor;

/// Hyperparameters for optimising one mask for one input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMaskConfig {
    pub beta: f32,
    pub learning_rate: f32,
    pub iterations: u64,
    pub noise_samples: usize,
    pub seed: u64,
    pub noise: NoiseKind,
}

impl SampleMaskConfig {
    fn validate(&self) -> Result<()> {
        // beta = 0 is allowed here: it is the reference point of beta sweeps.
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(LanError::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.noise_samples == 0 {
            return Err(LanError::Config("noise samples per step must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LanError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SampleMaskOutcome {
    pub mask: AttentionMask,
    /// Objective value at every iteration.
    pub losses: Vec<f32>,
}

impl SampleMaskOutcome {
    pub fn final_loss(&self) -> Option<f32> {
        self.losses.last().copied()
    }
}

/// Optimises free logits `z` so that `sigmoid(z)` minimises the corruption
/// objective for the single input `x`. Logits start at zero (mask 0.5).
/// Multi-channel images share one logit per pixel across channels.
/// `pool` feeds bootstrap noise.
pub fn train_sample_mask(
    model: &Checkpoint,
    x: &Tensor,
    pool: &[Tensor],
    cfg: &SampleMaskConfig,
) -> Result<SampleMaskOutcome> {
    cfg.validate()?;
    let input_shape = model.spec.input_shape.clone();
    if x.shape() != input_shape.as_slice() {
        return Err(LanError::shape(
            "sample mask",
            format!("input {:?} vs model input {input_shape:?}", x.shape()),
        ));
    }
    let raw_len = MaskLayout::raw_len(&input_shape);
    let layout = MaskLayout::for_input(&input_shape, raw_len)?;
    let mut noise = NoiseSource::new(cfg.noise.clone(), &input_shape, pool, cfg.seed)?;

    let clean = model.forward(x)?;
    let target_t = Tensor::stack(&[&clean])?;
    let batch = Tensor::stack(&[x])?;
    let mut logits = vec![Param {
        name: "mask.logits".into(),
        value: Tensor::zeros(&[1, raw_len]),
    }];
    let mut adam = AdamState::new(&logits, cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.iterations as usize);

    for it in 0..cfg.iterations {
        let draws: Vec<Tensor> = (0..cfg.noise_samples)
            .map(|_| noise.sample_batch(1))
            .collect();
        let step = || -> Result<(f32, Tensor)> {
            let mut tape = Tape::new();
            let z = tape.param(logits[0].value.clone())?;
            let f_params = model.bind(&mut tape, false)?;
            let target = tape.constant(target_t.clone())?;
            let a = tape.sigmoid(z)?;
            let mask = layout.expand(&mut tape, a, &input_shape)?;
            let loss = objective_on_tape(
                &mut tape, model, &f_params, &batch, mask, &draws, target, cfg.beta,
            )?;
            let mut grads = tape.backward(loss)?;
            let g = grads.take(z).unwrap_or_else(|| Tensor::zeros(&[1, raw_len]));
            Ok((tape.value(loss).item(), g))
        };
        let (loss, grad) = step().map_err(|e| divergence(it, e))?;
        adam.step(&mut logits, &[grad]).map_err(|e| divergence(it, e))?;
        losses.push(loss);
    }

    // Final mask from the final logits.
    let mut tape = Tape::new();
    let z = tape.constant(logits.swap_remove(0).value)?;
    let a = tape.sigmoid(z)?;
    let full = layout.expand(&mut tape, a, &input_shape)?;
    let values = tape.value(full).unstack().swap_remove(0);
    Ok(SampleMaskOutcome {
        mask: AttentionMask::new(values)?,
        losses,
    })
}
