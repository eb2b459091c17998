//! `LANCKPT1` checkpoint files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LanError, Result};
use crate::io::{decode_container, encode_container, read_file, write_atomic};
use crate::nn::network::{parameter_layout, Checkpoint, Param};
use crate::nn::spec::NetworkSpec;
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"LANCKPT1";

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    params: Vec<ParamEntry>,
    seed: u64,
    iteration: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            spec: self.spec.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                })
                .collect(),
            seed: self.seed,
            iteration: self.iteration,
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let blobs: Vec<&[f32]> = self.params.iter().map(|p| p.value.data()).collect();
        encode_container(CHECKPOINT_MAGIC, &json, &blobs)
    }

    pub fn from_bytes(bytes: &[u8], origin: &str) -> Result<Self> {
        let (header, floats) = decode_container(bytes, CHECKPOINT_MAGIC, origin)?;
        let header: Header = serde_json::from_slice(header)
            .map_err(|e| LanError::format(origin, 12, format!("bad header: {e}")))?;
        let layout = parameter_layout(&header.spec)
            .map_err(|e| LanError::format(origin, 12, format!("invalid network spec: {e}")))?;
        let declared: Vec<(String, Vec<usize>)> = header
            .params
            .iter()
            .map(|p| (p.name.clone(), p.shape.clone()))
            .collect();
        if declared != layout {
            return Err(LanError::format(
                origin,
                12,
                "parameter list does not match the network spec",
            ));
        }
        let expected: usize = layout.iter().map(|(_, s)| s.iter().product::<usize>()).sum();
        if floats.len() != expected {
            return Err(LanError::format(
                origin,
                bytes.len() as u64,
                format!("expected {expected} parameter values, found {}", floats.len()),
            ));
        }
        let mut offset = 0;
        let mut params = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let n: usize = shape.iter().product();
            params.push(Param {
                name,
                value: Tensor::new(shape, floats[offset..offset + n].to_vec())?,
            });
            offset += n;
        }
        Ok(Checkpoint {
            spec: header.spec,
            params,
            seed: header.seed,
            iteration: header.iteration,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = read_file(path)?;
        Self::from_bytes(&bytes, &path.display().to_string())
    }
}
