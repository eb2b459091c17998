//! Analysis artifacts built on trained classifiers and masks.
//!
//! Every report derives `Serialize` for machine output and has a `text()`
//! rendering with aligned columns for people.

pub mod grid;
pub mod heatmap;
pub mod regions;
pub mod sweep;
pub mod words;

use crate::error::{LanError, Result};
use crate::lan::LanModel;
use crate::nn::Checkpoint;
use crate::tensor::Tensor;

pub use grid::{autocorrelation, detect_grid, GridReport};
pub use heatmap::{accuracy_heatmap, Heatmap, HeatmapCell};
pub use regions::{region_stats, RegionReport, RegionStat};
pub use sweep::{beta_sweep, BetaRecord};
pub use words::{top_k_words, WordRanking};

/// Anything that maps a batch of inputs to class indices.
pub trait Classifier: Sync {
    fn classify_batch(&self, xs: &[Tensor]) -> Result<Vec<usize>>;
}

impl Classifier for Checkpoint {
    fn classify_batch(&self, xs: &[Tensor]) -> Result<Vec<usize>> {
        self.classify_all(xs, 256)
    }
}

/// Mean importance map `1 - A(x)` over `inputs`. Accumulates in f64 so the
/// result does not depend on input order beyond the final rounding.
pub fn mean_mask(lan: &LanModel, inputs: &[Tensor]) -> Result<Tensor> {
    let first = inputs
        .first()
        .ok_or_else(|| LanError::Contract("mean mask of an empty dataset".into()))?;
    let mut acc = vec![0.0f64; first.len()];
    for chunk in inputs.chunks(256) {
        let refs: Vec<&Tensor> = chunk.iter().collect();
        for m in lan.masks(&refs)? {
            for (a, v) in acc.iter_mut().zip(m.values().data()) {
                *a += 1.0 - *v as f64;
            }
        }
    }
    let n = inputs.len() as f64;
    Tensor::new(first.shape().to_vec(), acc.into_iter().map(|a| (a / n) as f32).collect())
}

/// Right-pads each row of `rows` to its column width, two spaces apart.
pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| format!("{s:<w$}", w = widths[c]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
