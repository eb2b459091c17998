use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tape;
use crate::error::{LanError, Result};
use crate::nn::adam::AdamState;
use crate::nn::loss::{cross_entropy_on_tape, one_hot};
use crate::nn::network::{forward_on_tape, Checkpoint, Mode};
use crate::nn::spec::NetworkSpec;
use crate::seed::{self, Rng};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub iterations: u64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            iterations: 1000,
            batch_size: 32,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    /// Minibatch loss at every iteration.
    pub losses: Vec<f32>,
}

/// Yields minibatch indices from a reshuffled permutation each epoch.
pub(crate) struct BatchSampler {
    order: Vec<usize>,
    cursor: usize,
    rng: Rng,
}

impl BatchSampler {
    pub fn new(n: usize, rng: Rng) -> Self {
        let mut s = BatchSampler {
            order: (0..n).collect(),
            cursor: n,
            rng,
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size {
            if self.cursor == self.order.len() {
                self.reshuffle();
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

pub(crate) fn divergence(iteration: u64, err: LanError) -> LanError {
    match err {
        LanError::NumericDomain { context } => LanError::Divergence {
            iteration,
            detail: format!("non-finite value in {context}"),
        },
        other => other,
    }
}

/// Trains a fresh classifier from Glorot initialisation.
pub fn train_classifier(
    spec: &NetworkSpec,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    spec.validate_classifier()?;
    let start = Checkpoint::initialize(spec.clone(), cfg.seed)?;
    continue_training(start, inputs, labels, cfg)
}

/// Minimises mean cross-entropy against one-hot labels over shuffled
/// minibatches, starting from `checkpoint`.
pub fn continue_training(
    mut checkpoint: Checkpoint,
    inputs: &[Tensor],
    labels: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    checkpoint.spec.validate_classifier()?;
    if inputs.is_empty() {
        return Err(LanError::Contract("training set is empty".into()));
    }
    if inputs.len() != labels.len() {
        return Err(LanError::Contract(format!(
            "{} inputs but {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(LanError::Config("batch size must be positive".into()));
    }
    let classes = checkpoint.output_dim()?;
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(LanError::Contract(format!("label {bad} >= {classes} classes")));
    }
    let mut sampler = BatchSampler::new(inputs.len(), seed::rng_for(cfg.seed, seed::stream::SHUFFLE));
    let mut dropout_rng = seed::rng_for(cfg.seed, seed::stream::DROPOUT);
    let mut adam = AdamState::new(&checkpoint.params, cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.iterations as usize);

    for it in 0..cfg.iterations {
        let batch = sampler.next_batch(cfg.batch_size);
        let xs: Vec<&Tensor> = batch.iter().map(|&i| &inputs[i]).collect();
        let ys: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
        let mut step = || -> Result<(f32, Vec<Tensor>)> {
            let mut tape = Tape::new();
            let params = checkpoint.bind(&mut tape, true)?;
            let x = tape.constant(Tensor::stack(&xs)?)?;
            let target = tape.constant(one_hot(&ys, classes)?)?;
            let pred = forward_on_tape(
                &checkpoint.spec,
                &mut tape,
                &params,
                x,
                Mode::Train,
                Some(&mut dropout_rng),
            )?;
            let loss = cross_entropy_on_tape(&mut tape, pred, target)?;
            let mut grads = tape.backward(loss)?;
            let g = params
                .iter()
                .map(|&p| grads.take(p).unwrap_or_else(|| Tensor::zeros(tape.shape(p))))
                .collect();
            Ok((tape.value(loss).item(), g))
        };
        let (loss, grads) = step().map_err(|e| divergence(it, e))?;
        adam.step(&mut checkpoint.params, &grads)
            .map_err(|e| divergence(it, e))?;
        losses.push(loss);
        checkpoint.iteration += 1;
    }
    Ok(TrainOutcome { checkpoint, losses })
}
