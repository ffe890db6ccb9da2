//! Checkpoint file: a JSON document with a format version, the model
//! dimensions, the init seed, training progress and every parameter tensor as
//! a named flat array with its shape. Floats round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelDims, ModelParams};
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub dims: ModelDims,
    pub seed: u64,
    pub epochs_completed: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vocab_hash: Option<String>,
    pub tensors: Vec<NamedTensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Checkpoint {
    pub fn from_params(params: &ModelParams, seed: u64, epochs_completed: usize) -> Self {
        Checkpoint {
            format_version: FORMAT_VERSION,
            dims: params.dims,
            seed,
            epochs_completed,
            vocab_hash: None,
            tensors: params
                .tensors()
                .into_iter()
                .map(|t| NamedTensor {
                    name: t.name.to_string(),
                    shape: t.shape,
                    data: t.data.to_vec(),
                })
                .collect(),
        }
    }

    pub fn to_params(&self) -> Result<ModelParams> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::config(format!(
                "unsupported checkpoint format version {}",
                self.format_version
            )));
        }
        self.dims.validate()?;
        let mut params = ModelParams::zeros(self.dims);
        let targets = params.tensors_mut();
        if targets.len() != self.tensors.len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                targets.len()
            )));
        }
        for (dst, src) in targets.into_iter().zip(&self.tensors) {
            if dst.name != src.name {
                return Err(Error::config(format!(
                    "expected tensor {}, found {}",
                    dst.name, src.name
                )));
            }
            if dst.shape != src.shape || dst.data.len() != src.data.len() {
                return Err(Error::config(format!(
                    "tensor {} has shape {:?}, model expects {:?}",
                    src.name, src.shape, dst.shape
                )));
            }
            dst.data.copy_from_slice(&src.data);
        }
        if !params.is_finite() {
            return Err(Error::non_finite("checkpoint parameters"));
        }
        Ok(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }
}
