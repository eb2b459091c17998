//! Named classifier architectures and training recipes.
//!
//! Each preset has a reference schedule (long runs) and a desk schedule
//! with fewer iterations and, where noted, a larger step size.

use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::nn::spec::{Activation, LayerSpec, NetworkSpec};
use crate::nn::train::TrainConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    #[default]
    Desk,
    Reference,
}

impl std::str::FromStr for Scale {
    type Err = LanError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Scale::Desk),
            "reference" => Ok(Scale::Reference),
            _ => Err(LanError::Config(format!(
                "unknown scale {s:?}; expected desk or reference"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierPreset {
    pub name: String,
    pub scale: Scale,
    pub spec: NetworkSpec,
    pub train: TrainConfig,
}

pub const CLASSIFIER_PRESETS: &[&str] = &["digit-appendix", "documents", "tank", "blobs"];

/// Keep probability of the document model's dropout layers.
pub const DOCUMENT_KEEP_PROB: f32 = 0.5;

/// Resolves `name` for inputs of `input_shape` and `classes` outputs.
pub fn classifier_preset(
    name: &str,
    input_shape: &[usize],
    classes: usize,
    scale: Scale,
) -> Result<ClassifierPreset> {
    let lrelu = Activation::LeakyRelu;
    let (layers, normalize, lr, reference_iters, desk_iters, desk_lr) = match name {
        "digit-appendix" => (
            vec![
                LayerSpec::conv(10, 2, 4, 4, lrelu),
                LayerSpec::conv(20, 2, 4, 4, lrelu),
                LayerSpec::fc(classes, Activation::Softmax),
            ],
            false,
            0.001,
            100_000,
            5_000,
            0.001,
        ),
        // Deep averaging network: embed, average over words, two hidden
        // layers with dropout, softmax.
        "documents" => (
            vec![
                LayerSpec::fc(50, Activation::Identity),
                LayerSpec::fc(200, lrelu),
                LayerSpec::dropout(DOCUMENT_KEEP_PROB),
                LayerSpec::fc(150, lrelu),
                LayerSpec::dropout(DOCUMENT_KEEP_PROB),
                LayerSpec::fc(classes, Activation::Softmax),
            ],
            true,
            0.00005,
            1_000_000,
            6_000,
            0.001,
        ),
        "tank" => (
            vec![
                LayerSpec::conv(8, 2, 4, 4, lrelu),
                LayerSpec::conv(16, 2, 4, 4, lrelu),
                LayerSpec::fc(classes, Activation::Softmax),
            ],
            false,
            0.001,
            20_000,
            3_000,
            0.001,
        ),
        "blobs" => (
            vec![LayerSpec::fc(16, lrelu), LayerSpec::fc(classes, Activation::Softmax)],
            false,
            0.01,
            2_000,
            2_000,
            0.01,
        ),
        _ => {
            return Err(LanError::Config(format!(
                "unknown classifier preset {name:?}; valid presets: {}",
                CLASSIFIER_PRESETS.join(", ")
            )))
        }
    };
    let mut spec = NetworkSpec::new(input_shape.to_vec(), layers);
    spec.normalize_input = normalize;
    spec.validate_classifier()?;
    let (learning_rate, iterations) = match scale {
        Scale::Reference => (lr, reference_iters),
        Scale::Desk => (desk_lr, desk_iters),
    };
    Ok(ClassifierPreset {
        name: name.into(),
        scale,
        spec,
        train: TrainConfig {
            learning_rate,
            iterations,
            batch_size: 32,
            seed: 0,
        },
    })
}
