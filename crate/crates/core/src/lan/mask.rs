use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::io::{decode_container, encode_container, read_file, write_atomic};
use crate::tensor::Tensor;

pub const MASK_MAGIC: &[u8; 8] = b"LANMASK1";

/// Per-component replaceability in `[0,1]`: 1 means the component can be
/// swapped for noise, 0 means the output depends on it.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMask {
    values: Tensor,
}

impl AttentionMask {
    pub fn new(values: Tensor) -> Result<Self> {
        if let Some(v) = values.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(LanError::Contract(format!("mask value {v} outside [0,1]")));
        }
        Ok(AttentionMask { values })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn into_values(self) -> Tensor {
        self.values
    }

    pub fn shape(&self) -> &[usize] {
        self.values.shape()
    }

    pub fn mean(&self) -> f32 {
        self.values.mean()
    }

    /// `1 - mask`: high where the output depends on the input.
    pub fn importance(&self) -> Tensor {
        self.values.map(|a| 1.0 - a)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&MaskHeader {
            shape: self.values.shape().to_vec(),
        })
        .expect("header serialises");
        encode_container(MASK_MAGIC, &header, &[self.values.data()])
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let (header, floats) = decode_container(bytes, MASK_MAGIC, origin)?;
        let header: MaskHeader = serde_json::from_slice(header)
            .map_err(|e| LanError::format(origin, 12, format!("bad header: {e}")))?;
        let values = Tensor::new(header.shape, floats)
            .map_err(|e| LanError::format(origin, 12, e.to_string()))?;
        AttentionMask::new(values).map_err(|e| LanError::format(origin, 12, e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}

#[derive(Serialize, Deserialize)]
struct MaskHeader {
    shape: Vec<usize>,
}

/// `mask * eta + (1 - mask) * x`, elementwise.
pub fn corrupt(x: &Tensor, mask: &AttentionMask, eta: &Tensor) -> Result<Tensor> {
    if x.shape() != mask.shape() || eta.shape() != x.shape() {
        return Err(LanError::shape(
            "corrupt",
            format!(
                "input {:?}, mask {:?}, noise {:?}",
                x.shape(),
                mask.shape(),
                eta.shape()
            ),
        ));
    }
    let data = x
        .data()
        .iter()
        .zip(mask.values.data())
        .zip(eta.data())
        .map(|((&xi, &a), &e)| a * e + (1.0 - a) * xi)
        .collect();
    let out = Tensor::new(x.shape().to_vec(), data)?;
    if !out.is_finite() {
        return Err(LanError::NumericDomain {
            context: "corrupt".into(),
        });
    }
    Ok(out)
}

/// Stretches a single-channel `(1,H,W)` mask across `channels`.
pub fn tile_channels(mask: &Tensor, channels: usize) -> Result<Tensor> {
    let [1, h, w] = *mask.shape() else {
        return Err(LanError::shape(
            "tile",
            format!("expected (1,H,W), got {:?}", mask.shape()),
        ));
    };
    let mut data = Vec::with_capacity(channels * h * w);
    for _ in 0..channels {
        data.extend_from_slice(mask.data());
    }
    Tensor::new(vec![channels, h, w], data)
}
