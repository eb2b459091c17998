//! Dataset generators and ingestion.
//!
//! Every generator is a pure function of its config and seed.

pub mod corpus;
pub mod digits;
pub mod idx;
pub mod store;
pub mod tank;
pub mod translated;

use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::tensor::Tensor;

pub use corpus::{gen_corpus, load_real_corpus, BowSample, CorpusConfig, Vocabulary, UNK};
pub use digits::render_digits;
pub use idx::{load_idx, write_idx};
pub use store::{load_dataset, save_dataset, DatasetManifest, StoredDataset};
pub use tank::{gen_tank_forest, TankConfig};
pub use translated::{downscale_digit, make_translated, place_digit, Region, TranslatedConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxKind {
    Digit,
    Tank,
    Cloud,
    Tree,
}

/// Axis-aligned box with exclusive upper corner: columns `x0..x1`, rows `y0..y1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledBox {
    pub kind: BoxKind,
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl LabeledBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

/// A grayscale image `(1,H,W)` in `[0,1]` with its label and object boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub pixels: Tensor,
    pub label: usize,
    pub boxes: Vec<LabeledBox>,
}

impl ImageSample {
    pub fn new(pixels: Tensor, label: usize, boxes: Vec<LabeledBox>) -> Result<Self> {
        let [1, h, w] = *pixels.shape() else {
            return Err(LanError::shape(
                "image sample",
                format!("expected (1,H,W), got {:?}", pixels.shape()),
            ));
        };
        if pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(LanError::Contract("pixel outside [0,1]".into()));
        }
        if let Some(b) = boxes
            .iter()
            .find(|b| b.x0 >= b.x1 || b.y0 >= b.y1 || b.x1 > w || b.y1 > h)
        {
            return Err(LanError::Contract(format!("box {b:?} outside {w}x{h} image")));
        }
        Ok(ImageSample {
            pixels,
            label,
            boxes,
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[2]
    }

    pub fn boxes_of(&self, kind: BoxKind) -> impl Iterator<Item = &LabeledBox> {
        self.boxes.iter().filter(move |b| b.kind == kind)
    }
}

/// Splits samples into model inputs and labels.
pub fn split_inputs<'a, I>(samples: I) -> (Vec<Tensor>, Vec<usize>)
where
    I: IntoIterator<Item = &'a ImageSample>,
{
    samples
        .into_iter()
        .map(|s| (s.pixels.clone(), s.label))
        .unzip()
}
