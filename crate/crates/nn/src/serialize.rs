//! Model file: a JSON envelope holding the architecture, every persistent
//! tensor as base64 little-endian `f64`, and caller-supplied metadata.

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::layers::{Layer, LayerSpec};
use crate::network::{Network, Sequential};
use crate::tensor::Tensor;
use crate::NnError;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedTensor {
    pub shape: Vec<usize>,
    pub data: String,
}

impl EncodedTensor {
    pub fn encode(t: &Tensor) -> Self {
        let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
        Self {
            shape: t.shape().to_vec(),
            data: STANDARD.encode(bytes),
        }
    }

    pub fn decode(&self) -> Result<Tensor, NnError> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| NnError::Model(format!("bad base64: {e}")))?;
        if bytes.len() % 8 != 0 {
            return Err(NnError::Model(
                "tensor byte length not a multiple of 8".into(),
            ));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Tensor::new(self.shape.clone(), data)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub spec: LayerSpec,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tensors: BTreeMap<String, EncodedTensor>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub trunk: Vec<LayerRecord>,
    #[serde(default)]
    pub heads: Vec<Vec<LayerRecord>>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn records(seq: &Sequential) -> Vec<LayerRecord> {
    seq.layers
        .iter()
        .map(|l| LayerRecord {
            spec: l.spec(),
            tensors: l
                .state()
                .into_iter()
                .map(|(name, t)| (name.to_string(), EncodedTensor::encode(t)))
                .collect(),
        })
        .collect()
}

fn restore(recs: &[LayerRecord]) -> Result<Sequential, NnError> {
    // initialization is overwritten, so any rng will do
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut layers = Vec::with_capacity(recs.len());
    for (i, rec) in recs.iter().enumerate() {
        let mut layer = Layer::build(&rec.spec, &mut rng);
        let expected = layer.state().len();
        if rec.tensors.len() != expected {
            return Err(NnError::Model(format!(
                "layer {i}: expected {expected} tensors, found {}",
                rec.tensors.len()
            )));
        }
        for (name, enc) in &rec.tensors {
            let t = enc.decode()?;
            let slot = layer
                .state_mut(name)
                .ok_or_else(|| NnError::Model(format!("layer {i}: unknown tensor {name}")))?;
            if slot.shape() != t.shape() {
                return Err(NnError::Model(format!(
                    "layer {i}: tensor {name} has shape {:?}, expected {:?}",
                    t.shape(),
                    slot.shape()
                )));
            }
            *slot = t;
        }
        layers.push(layer);
    }
    Ok(Sequential { layers })
}

impl ModelFile {
    pub fn from_network(net: &Network, metadata: serde_json::Value) -> Self {
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            trunk: records(&net.trunk),
            heads: net.heads.iter().map(records).collect(),
            metadata,
        }
    }

    pub fn to_network(&self) -> Result<Network, NnError> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(NnError::Model(format!(
                "unsupported schema version {}",
                self.schema_version
            )));
        }
        Ok(Network {
            trunk: restore(&self.trunk)?,
            heads: self
                .heads
                .iter()
                .map(|h| restore(h))
                .collect::<Result<_, _>>()?,
        })
    }

    pub fn to_json(&self) -> Result<String, NnError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, NnError> {
        Ok(serde_json::from_str(text)?)
    }
}
