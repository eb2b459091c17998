//! Latent attention masks: noise sources, corruption, the masking objective,
//! whole-dataset attention networks and per-sample masks.

pub mod mask;
pub mod noise;
pub mod objective;
pub mod presets;
pub mod sample;
pub mod train;

pub use mask::{corrupt, tile_channels, AttentionMask, MASK_MAGIC};
pub use noise::{NoiseKind, NoiseSource};
pub use objective::lan_loss;
pub use sample::{train_sample_mask, SampleMaskConfig, SampleMaskOutcome};
pub use train::{train_lan, LanModel, LanOutcome, LanTrainConfig};

/// `1 - mask`.
pub fn importance(mask: &AttentionMask) -> crate::tensor::Tensor {
    mask.importance()
}
