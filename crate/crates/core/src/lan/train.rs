use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{LanError, Result};
use crate::lan::mask::AttentionMask;
use crate::lan::noise::{NoiseKind, NoiseSource};
use crate::lan::objective::{objective_on_tape, MaskLayout};
use crate::nn::train::{divergence, BatchSampler};
use crate::nn::{forward_on_tape, AdamState, Checkpoint, LayerSpec, Mode, NetworkSpec};
use crate::seed;
use crate::tensor::Tensor;

/// Hyperparameters for training an attention network over a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanTrainConfig {
    pub beta: f32,
    pub learning_rate: f32,
    pub iterations: u64,
    /// Noise draws per sample per step (Monte Carlo size of the expectation).
    pub noise_samples: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub noise: NoiseKind,
    /// Layers of the attention network; the last one must be a sigmoid
    /// layer with one unit per input component (or per pixel, for masks
    /// tiled across channels).
    pub layers: Vec<LayerSpec>,
}

impl LanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(LanError::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.noise_samples == 0 {
            return Err(LanError::Config("noise samples per step must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LanError::Config("batch size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LanError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn network_spec(&self, input_shape: &[usize]) -> NetworkSpec {
        NetworkSpec::new(input_shape.to_vec(), self.layers.clone())
    }
}

/// A trained attention network `A: R^d -> [0,1]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct LanModel {
    pub checkpoint: Checkpoint,
}

impl LanModel {
    pub fn new(checkpoint: Checkpoint) -> Result<Self> {
        checkpoint.spec.validate_mask_head()?;
        MaskLayout::for_input(&checkpoint.spec.input_shape, checkpoint.output_dim()?)?;
        Ok(LanModel { checkpoint })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.checkpoint.spec.input_shape
    }


    pub fn masks(&self, xs: &[&Tensor]) -> Result<Vec<AttentionMask>> {
        if xs.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let params = self.checkpoint.bind(&mut tape, false)?;
        let input = tape.constant(Tensor::stack(xs)?)?;
        let m = mask_on_tape(&self.checkpoint.spec, &mut tape, &params, input)?;
        tape.value(m)
            .unstack()
            .into_iter()
            .map(AttentionMask::new)
            .collect()
    }

    pub fn mask(&self, x: &Tensor) -> Result<AttentionMask> {
        Ok(self.masks(&[x])?.swap_remove(0))
    }
}

/// Records the mask of attention network `spec` for a batch `(N, ..d)`; the
/// result has the same shape as the batch.
pub(crate) fn mask_on_tape(
    spec: &NetworkSpec,
    tape: &mut Tape,
    params: &[Var],
    inputs: Var,
) -> Result<Var> {
    let raw = forward_on_tape(spec, tape, params, inputs, Mode::Eval, None)?;
    let layout = MaskLayout::for_input(&spec.input_shape, tape.shape(raw)[1])?;
    layout.expand(tape, raw, &spec.input_shape)
}

#[derive(Clone, Debug)]
pub struct LanOutcome {
    pub model: LanModel,
    /// Objective value at every iteration.
    pub losses: Vec<f32>,
}

/// Trains an attention network against the frozen classifier `model` on
/// `inputs`. Bootstrap noise draws from `inputs`.
pub fn train_lan(model: &Checkpoint, inputs: &[Tensor], cfg: &LanTrainConfig) -> Result<LanOutcome> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(LanError::Contract("LAN training set is empty".into()));
    }
    let input_shape = model.spec.input_shape.clone();
    let lan_spec = cfg.network_spec(&input_shape);
    lan_spec.validate_mask_head()?;
    MaskLayout::for_input(&input_shape, lan_spec.output_dim()?)?;

    let mut lan = Checkpoint::initialize(lan_spec, cfg.seed)?;
    let mut noise = NoiseSource::new(cfg.noise.clone(), &input_shape, inputs, cfg.seed)?;
    let mut sampler = BatchSampler::new(inputs.len(), seed::rng_for(cfg.seed, seed::stream::SHUFFLE));
    let mut adam = AdamState::new(&lan.params, cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.iterations as usize);

    for it in 0..cfg.iterations {
        let batch = sampler.next_batch(cfg.batch_size);
        let xs: Vec<&Tensor> = batch.iter().map(|&i| &inputs[i]).collect();
        let draws: Vec<Tensor> = (0..cfg.noise_samples)
            .map(|_| noise.sample_batch(xs.len()))
            .collect();
        let step = || -> Result<(f32, Vec<Tensor>)> {
            let x = Tensor::stack(&xs)?;
            let clean = model.forward_batch(&xs)?;
            let clean_refs: Vec<&Tensor> = clean.iter().collect();
            let mut tape = Tape::new();
            let lan_params = lan.bind(&mut tape, true)?;
            let f_params = model.bind(&mut tape, false)?;
            let target = tape.constant(Tensor::stack(&clean_refs)?)?;
            let xv = tape.constant(x.clone())?;
            let mask = mask_on_tape(&lan.spec, &mut tape, &lan_params, xv)?;
            let loss = objective_on_tape(
                &mut tape, model, &f_params, &x, mask, &draws, target, cfg.beta,
            )?;
            let mut grads = tape.backward(loss)?;
            let g = lan_params
                .iter()
                .map(|&p| grads.take(p).unwrap_or_else(|| Tensor::zeros(tape.shape(p))))
                .collect();
            Ok((tape.value(loss).item(), g))
        };
        let (loss, grads) = step().map_err(|e| divergence(it, e))?;
        adam.step(&mut lan.params, &grads)
            .map_err(|e| divergence(it, e))?;
        losses.push(loss);
        lan.iteration += 1;
    }
    Ok(LanOutcome {
        model: LanModel { checkpoint: lan },
        losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;

    fn flat_model(zero: bool) -> Checkpoint {
        let spec = NetworkSpec::new(
            vec![4],
            vec![
                LayerSpec::fc(6, Activation::LeakyRelu),
                LayerSpec::fc(3, Activation::Softmax),
            ],
        );
        let mut c = Checkpoint::initialize(spec, 2).unwrap();
        if zero {
            for p in &mut c.params {
                p.value = Tensor::zeros(p.value.shape());
            }
        }
        c
    }

    fn cfg(iterations: u64) -> LanTrainConfig {
        LanTrainConfig {
            beta: 1.0,
            learning_rate: 0.01,
            iterations,
            noise_samples: 1,
            batch_size: 4,
            seed: 3,
            noise: NoiseKind::Bootstrap,
            layers: vec![
                LayerSpec::fc(8, Activation::LeakyRelu),
                LayerSpec::fc(4, Activation::Sigmoid),
            ],
        }
    }

    fn data() -> Vec<Tensor> {
        (0..8)
            .map(|i| Tensor::from_vec(vec![i as f32 * 0.1, 1.0, -0.5, (i % 3) as f32]))
            .collect()
    }

    #[test]
    fn zero_iterations_is_initialisation() {
        let f = flat_model(false);
        let out = train_lan(&f, &data(), &cfg(0)).unwrap();
        let init = Checkpoint::initialize(cfg(0).network_spec(&[4]), 3).unwrap();
        assert_eq!(out.model.checkpoint, init);
    }

    #[test]
    fn classifier_is_untouched_and_runs_repeat() {
        let f = flat_model(false);
        let before = f.clone();
        let a = train_lan(&f, &data(), &cfg(20)).unwrap();
        let b = train_lan(&f, &data(), &cfg(20)).unwrap();
        assert_eq!(f, before);
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn input_independent_model_drives_mask_up() {
        let f = flat_model(true);
        let mut c = cfg(400);
        c.learning_rate = 0.02;
        let out = train_lan(&f, &data(), &c).unwrap();
        let x = Tensor::from_vec(vec![0.7, 0.2, 0.1, 3.0]);
        assert!(out.model.mask(&x).unwrap().mean() > 0.95);
    }

    #[test]
    fn config_checks() {
        let f = flat_model(false);
        let mut c = cfg(1);
        c.beta = 0.0;
        assert!(train_lan(&f, &data(), &c).is_err());
        let mut c = cfg(1);
        c.noise_samples = 0;
        assert!(train_lan(&f, &data(), &c).is_err());
        let mut c = cfg(1);
        c.layers = vec![LayerSpec::fc(4, Activation::Tanh)];
        assert!(train_lan(&f, &data(), &c).is_err());
        let mut c = cfg(1);
        c.layers = vec![LayerSpec::fc(3, Activation::Sigmoid)];
        assert!(train_lan(&f, &data(), &c).is_err());
    }
}
