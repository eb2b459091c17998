//! Named attention-network and per-sample mask recipes.

use crate::error::{LanError, Result};
use crate::lan::noise::NoiseKind;
use crate::lan::objective::MaskLayout;
use crate::lan::sample::SampleMaskConfig;
use crate::lan::train::LanTrainConfig;
use crate::nn::presets::Scale;
use crate::nn::{Activation, LayerSpec};

pub const LAN_PRESETS: &[&str] = &["digits", "documents", "cifar"];
pub const SAMPLE_PRESETS: &[&str] = &["sample-specific", "sample-specific-documents", "tank"];

/// Attention-network recipe for inputs of `input_shape`. The sigmoid head
/// has one unit per mask entry (per pixel for multi-channel images).
pub fn lan_preset(name: &str, input_shape: &[usize], scale: Scale) -> Result<LanTrainConfig> {
    let lrelu = Activation::LeakyRelu;
    let out = MaskLayout::raw_len(input_shape);
    let (beta, noise, hidden, lr, reference_iters, desk_iters, desk_lr): (f32, _, Vec<usize>, f32, u64, u64, f32) =
        match name {
            "digits" => (5.0, NoiseKind::Bootstrap, vec![100], 0.0001, 100_000, 8_000, 0.0005),
            "documents" => (
                50.0,
                NoiseKind::Constant { value: 0.0 },
                vec![100, 1000],
                0.001,
                100_000,
                5_000,
                0.001,
            ),
            "cifar" => (7.0, NoiseKind::Bootstrap, vec![500, 500, 500], 0.0005, 250_000, 10_000, 0.0005),
            _ => {
                return Err(LanError::Config(format!(
                    "unknown attention preset {name:?}; valid presets: {}",
                    LAN_PRESETS.join(", ")
                )))
            }
        };
    let mut layers: Vec<LayerSpec> = hidden.into_iter().map(|u| LayerSpec::fc(u, lrelu)).collect();
    layers.push(LayerSpec::fc(out, Activation::Sigmoid));
    let (learning_rate, iterations) = match scale {
        Scale::Reference => (lr, reference_iters),
        Scale::Desk => (desk_lr, desk_iters),
    };
    Ok(LanTrainConfig {
        beta,
        learning_rate,
        iterations,
        noise_samples: 1,
        batch_size: 32,
        seed: 0,
        noise,
        layers,
    })
}

/// Per-sample mask recipe. These runs are short enough that both scales
/// use the full schedule.
pub fn sample_preset(name: &str) -> Result<SampleMaskConfig> {
    let (beta, learning_rate, noise) = match name {
        "sample-specific" => (50.0, 0.05, NoiseKind::Bootstrap),
        "sample-specific-documents" => (50.0, 0.001, NoiseKind::Constant { value: 0.0 }),
        "tank" => (1.0, 0.05, NoiseKind::Bootstrap),
        _ => {
            return Err(LanError::Config(format!(
                "unknown sample-mask preset {name:?}; valid presets: {}",
                SAMPLE_PRESETS.join(", ")
            )))
        }
    };
    Ok(SampleMaskConfig {
        beta,
        learning_rate,
        iterations: 10_000,
        noise_samples: 1,
        seed: 0,
        noise,
    })
}
