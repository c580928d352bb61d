//! Checkpoints as safetensors archives: every tensor is little-endian f32
//! under a hierarchical name, and a JSON metadata header records the
//! configuration digest, schedule, step and random-number state.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use customnet_autograd::{AdamW, AdamWConfig, ParamStore, Tensor};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype, SafeTensors, TensorView};
use serde::{Deserialize, Serialize};

use super::model::ModelConfig;
use super::schedule::ScheduleConfig;
use crate::datapipe::EpochStream;
use crate::digest::sha256_hex;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "customnet-checkpoint/1";
const META_KEY: &str = "customnet";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format: String,
    pub config_digest: String,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub step: u64,
    pub rng: Option<ChaCha8Rng>,
    pub stream: Option<EpochStream>,
    pub stage: usize,
    pub optimizer_step: u64,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub params: ParamStore<f32>,
    pub ema: Option<ParamStore<f32>>,
    /// First and second moments by parameter name.
    pub moments: Option<(BTreeMap<String, Tensor<f32>>, BTreeMap<String, Tensor<f32>>)>,
}

fn to_bytes(t: &Tensor<f32>) -> Vec<u8> {
    t.data().iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl Checkpoint {
    /// Serialized archive bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut entries: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
        for (n, t) in self.params.iter() {
            entries.push((format!("params.{n}"), t.shape().to_vec(), to_bytes(t)));
        }
        if let Some(ema) = &self.ema {
            for (n, t) in ema.iter() {
                entries.push((format!("ema.{n}"), t.shape().to_vec(), to_bytes(t)));
            }
        }
        if let Some((m, v)) = &self.moments {
            for (n, t) in m {
                entries.push((format!("optim.m.{n}"), t.shape().to_vec(), to_bytes(t)));
            }
            for (n, t) in v {
                entries.push((format!("optim.v.{n}"), t.shape().to_vec(), to_bytes(t)));
            }
        }
        let views = entries
            .iter()
            .map(|(n, s, b)| Ok((n.clone(), TensorView::new(Dtype::F32, s.clone(), b).map_err(st_err)?)))
            .collect::<Result<Vec<_>>>()?;
        let mut info = HashMap::new();
        info.insert(META_KEY.to_string(), serde_json::to_string(&self.meta)?);
        safetensors::serialize(views, Some(info)).map_err(st_err)
    }

    /// Writes atomically through a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let st = SafeTensors::deserialize(bytes).map_err(st_err)?;
        let (_, header) = SafeTensors::read_metadata(bytes).map_err(st_err)?;
        let meta_json = header
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY))
            .ok_or_else(|| Error::Checkpoint("missing metadata header".into()))?;
        let meta: CheckpointMeta = serde_json::from_str(meta_json)?;
        if meta.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format {}", meta.format)));
        }
        let mut params = ParamStore::new();
        let mut ema = ParamStore::new();
        let mut m = BTreeMap::new();
        let mut v = BTreeMap::new();
        for (name, view) in st.tensors() {
            if view.dtype() != Dtype::F32 {
                return Err(Error::Checkpoint(format!("{name}: dtype {:?}, expected F32", view.dtype())));
            }
            let data: Vec<f32> = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(view.shape().to_vec(), data);
            if let Some(n) = name.strip_prefix("params.") {
                params.insert(n, t);
            } else if let Some(n) = name.strip_prefix("ema.") {
                ema.insert(n, t);
            } else if let Some(n) = name.strip_prefix("optim.m.") {
                m.insert(n.to_string(), t);
            } else if let Some(n) = name.strip_prefix("optim.v.") {
                v.insert(n.to_string(), t);
            } else {
                return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
            }
        }
        Ok(Self {
            meta,
            params,
            ema: (!ema.is_empty()).then_some(ema),
            moments: (!m.is_empty()).then_some((m, v)),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Digest of the saved archive, identifying the weights.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    /// Weights to sample with: the moving average when present.
    pub fn inference_params(&self) -> &ParamStore<f32> {
        self.ema.as_ref().unwrap_or(&self.params)
    }

    /// Rebuilds the optimizer state.
    pub fn optimizer(&self, config: AdamWConfig) -> AdamW<f32> {
        match &self.moments {
            Some((m, v)) => AdamW::restore(
                config,
                self.meta.optimizer_step,
                m.iter()
                    .filter_map(|(n, mt)| v.get(n).map(|vt| (n.clone(), mt.clone(), vt.clone()))),
            ),
            None => AdamW::new(config),
        }
    }

    pub fn check_digest(&self, expected: &str) -> Result<()> {
        if self.meta.config_digest != expected {
            return Err(Error::DigestMismatch {
                expected: expected.to_string(),
                found: self.meta.config_digest.clone(),
            });
        }
        Ok(())
    }
}

fn st_err(e: safetensors::SafeTensorError) -> Error {
    Error::Checkpoint(e.to_string())
}
