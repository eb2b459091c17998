use rayon::prelude::*;
use serde::Serialize;

use crate::diagnostics::align;
use crate::error::{LanError, Result};
use crate::lan::{train_sample_mask, AttentionMask, SampleMaskConfig};
use crate::nn::Checkpoint;
use crate::tensor::Tensor;

#[derive(Clone, Debug, Serialize)]
pub struct BetaRecord {
    pub beta: f32,
    pub mean_mask: f32,
    pub final_loss: f32,
    #[serde(skip)]
    pub mask: AttentionMask,
}

impl BetaRecord {
    pub fn text(records: &[BetaRecord]) -> String {
        let mut rows = vec![vec!["beta".into(), "mean mask".into(), "final loss".into()]];
        rows.extend(
            records
                .iter()
                .map(|r| vec![format!("{}", r.beta), format!("{:.4}", r.mean_mask), format!("{:.4}", r.final_loss)]),
        );
        align(&rows)
    }
}

/// One per-sample mask per `beta`, all from the same seed and schedule
/// (`base`), returned in the order given.
pub fn beta_sweep(
    model: &Checkpoint,
    x: &Tensor,
    pool: &[Tensor],
    betas: &[f32],
    base: &SampleMaskConfig,
) -> Result<Vec<BetaRecord>> {
    if betas.is_empty() {
        return Err(LanError::Config("beta sweep needs at least one beta".into()));
    }
    if let Some(b) = betas.iter().find(|b| !(**b > 0.0) || !b.is_finite()) {
        return Err(LanError::Config(format!("sweep betas must be positive, got {b}")));
    }
    betas
        .par_iter()
        .map(|&beta| {
            let cfg = SampleMaskConfig { beta, ..base.clone() };
            let out = train_sample_mask(model, x, pool, &cfg)?;
            Ok(BetaRecord {
                beta,
                mean_mask: out.mask.mean(),
                final_loss: out.final_loss().unwrap_or(f32::NAN),
                mask: out.mask,
            })
        })
        .collect()
}
