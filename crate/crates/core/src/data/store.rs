//! On-disk datasets: `manifest.json`, `inputs.f32` (little-endian floats,
//! samples back to back) and `labels.u8`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{BowSample, ImageSample, LabeledBox, Vocabulary};
use crate::error::{LanError, Result};
use crate::io::{read_file, write_atomic};
use crate::tensor::Tensor;

pub const MANIFEST: &str = "manifest.json";
pub const INPUTS: &str = "inputs.f32";
pub const LABELS: &str = "labels.u8";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    /// Generator name, e.g. `translated`, `tank` or `corpus`.
    pub domain: String,
    /// Generator config as given.
    pub config: serde_json::Value,
    pub seed: u64,
    pub count: usize,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    /// Per-sample object boxes (image domains only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<Vec<LabeledBox>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocabulary: Option<Vocabulary>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredDataset {
    pub manifest: DatasetManifest,
    pub inputs: Vec<Tensor>,
    pub labels: Vec<usize>,
}

impl StoredDataset {
    pub fn from_images(
        domain: &str,
        config: serde_json::Value,
        seed: u64,
        classes: usize,
        samples: &[ImageSample],
    ) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| LanError::Contract("dataset is empty".into()))?;
        Ok(StoredDataset {
            manifest: DatasetManifest {
                domain: domain.into(),
                config,
                seed,
                count: samples.len(),
                input_shape: first.pixels.shape().to_vec(),
                classes,
                boxes: Some(samples.iter().map(|s| s.boxes.clone()).collect()),
                vocabulary: None,
            },
            inputs: samples.iter().map(|s| s.pixels.clone()).collect(),
            labels: samples.iter().map(|s| s.label).collect(),
        })
    }

    pub fn from_documents(
        domain: &str,
        config: serde_json::Value,
        seed: u64,
        classes: usize,
        vocab: &Vocabulary,
        docs: &[BowSample],
    ) -> Result<Self> {
        if docs.is_empty() {
            return Err(LanError::Contract("dataset is empty".into()));
        }
        Ok(StoredDataset {
            manifest: DatasetManifest {
                domain: domain.into(),
                config,
                seed,
                count: docs.len(),
                input_shape: vec![vocab.len()],
                classes,
                boxes: None,
                vocabulary: Some(vocab.clone()),
            },
            inputs: docs.iter().map(|d| d.counts.clone()).collect(),
            labels: docs.iter().map(|d| d.label).collect(),
        })
    }

    /// Rebuilds image samples with their boxes.
    pub fn images(&self) -> Result<Vec<ImageSample>> {
        let boxes = self.manifest.boxes.clone().unwrap_or_default();
        self.inputs
            .iter()
            .zip(&self.labels)
            .enumerate()
            .map(|(i, (x, &l))| ImageSample::new(x.clone(), l, boxes.get(i).cloned().unwrap_or_default()))
            .collect()
    }
}

pub fn save_dataset(dir: &Path, data: &StoredDataset) -> Result<()> {
    let mut header = serde_json::to_vec_pretty(&data.manifest).expect("manifest serialises");
    header.push(b'\n');
    let mut blob = Vec::with_capacity(data.inputs.len() * data.manifest.input_shape.iter().product::<usize>() * 4);
    for x in &data.inputs {
        if x.shape() != data.manifest.input_shape.as_slice() {
            return Err(LanError::shape("save dataset", "inputs differ in shape"));
        }
        for v in x.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    let labels: Vec<u8> = data
        .labels
        .iter()
        .map(|&l| u8::try_from(l).map_err(|_| LanError::Contract(format!("label {l} exceeds 255"))))
        .collect::<Result<_>>()?;
    write_atomic(&dir.join(INPUTS), &blob)?;
    write_atomic(&dir.join(LABELS), &labels)?;
    write_atomic(&dir.join(MANIFEST), &header)
}

pub fn load_dataset(dir: &Path) -> Result<StoredDataset> {
    let mpath = dir.join(MANIFEST);
    let manifest: DatasetManifest = serde_json::from_slice(&read_file(&mpath)?).map_err(|e| {
        LanError::format(mpath.display().to_string(), e.column() as u64, e.to_string())
    })?;
    let ipath = dir.join(INPUTS);
    let blob = read_file(&ipath)?;
    let per: usize = manifest.input_shape.iter().product();
    if per == 0 || blob.len() != manifest.count * per * 4 {
        return Err(LanError::format(
            ipath.display().to_string(),
            blob.len() as u64,
            format!("expected {} bytes for {} samples", manifest.count * per * 4, manifest.count),
        ));
    }
    let floats: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let inputs = floats
        .chunks(per)
        .map(|c| Tensor::new(manifest.input_shape.clone(), c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    let lpath = dir.join(LABELS);
    let labels_raw = read_file(&lpath)?;
    if labels_raw.len() != manifest.count {
        return Err(LanError::format(
            lpath.display().to_string(),
            labels_raw.len() as u64,
            format!("expected {} labels", manifest.count),
        ));
    }
    if let Some(pos) = labels_raw.iter().position(|&l| l as usize >= manifest.classes) {
        return Err(LanError::format(
            lpath.display().to_string(),
            pos as u64,
            format!("label {} outside 0..{}", labels_raw[pos], manifest.classes),
        ));
    }
    Ok(StoredDataset {
        manifest,
        inputs,
        labels: labels_raw.into_iter().map(usize::from).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_corpus, gen_tank_forest, CorpusConfig, TankConfig};

    #[test]
    fn image_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let scenes = gen_tank_forest(6, &TankConfig::default(), true).unwrap();
        let ds = StoredDataset::from_images("tank", serde_json::json!({"n": 6}), 0, 2, &scenes).unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.images().unwrap(), scenes);
    }

    #[test]
    fn corpus_roundtrip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CorpusConfig {
            docs: 20,
            ..CorpusConfig::default()
        };
        let (vocab, docs) = gen_corpus(&cfg).unwrap();
        let ds = StoredDataset::from_documents("corpus", serde_json::to_value(&cfg).unwrap(), 0, 10, &vocab, &docs)
            .unwrap();
        save_dataset(dir.path(), &ds).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);
        std::fs::write(dir.path().join(LABELS), [0u8; 3]).unwrap();
        let err = load_dataset(dir.path()).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
