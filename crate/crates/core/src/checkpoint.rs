//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "OGNC" | u32 version | u64 header length | JSON header | payload
//! ```
//!
//! The header carries the model config, precision, parameter names and
//! shapes, optional training config, optimizer step and RNG stream
//! positions. The payload holds every parameter in header order, followed
//! by the Adam first and second moments when present, each as raw
//! little-endian floats of the stored width. Values round-trip bitwise.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Precision, Real};
use crate::model::{Group, ModelConfig, OrderedGnn, Param};
use crate::train::{AdamState, DecayMode, TrainConfig};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OGNC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    group: Group,
    rows: usize,
    cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    precision: Precision,
    model: ModelConfig,
    params: Vec<ParamEntry>,
    train: Option<TrainConfig>,
    decay_mode: DecayMode,
    adam_step: Option<u64>,
    rng_seed: Option<u64>,
    rng_positions: BTreeMap<String, u128>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model: OrderedGnn<T>,
    pub train: Option<TrainConfig>,
    pub optimizer: Option<AdamState<T>>,
    /// Base seed and word positions of the RNG streams.
    pub rng: Option<(u64, BTreeMap<String, u128>)>,
}

impl<T: Real> Checkpoint<T> {
    pub fn new(model: OrderedGnn<T>) -> Self {
        Checkpoint {
            model,
            train: None,
            optimizer: None,
            rng: None,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.model.params();
        let header = Header {
            precision: T::PRECISION,
            model: self.model.config().clone(),
            params: params
                .iter()
                .map(|p| ParamEntry {
                    name: p.name.clone(),
                    group: p.group,
                    rows: p.value.rows(),
                    cols: p.value.cols(),
                })
                .collect(),
            train: self.train.clone(),
            decay_mode: DecayMode::CoupledL2,
            adam_step: self.optimizer.as_ref().map(|s| s.step),
            rng_seed: self.rng.as_ref().map(|r| r.0),
            rng_positions: self.rng.as_ref().map(|r| r.1.clone()).unwrap_or_default(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |m: &Matrix<T>| {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes_vec());
            }
        };
        params.iter().for_each(|p| put(&p.value));
        if let Some(s) = &self.optimizer {
            s.m.iter().chain(&s.v).for_each(&mut put);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, mut payload) = split_header(bytes)?;
        if header.precision != T::PRECISION {
            return Err(Error::Versioning(format!(
                "checkpoint stores {:?} values, requested {:?}",
                header.precision,
                T::PRECISION
            )));
        }
        let width = T::PRECISION.width();
        let mut take = |rows: usize, cols: usize| -> Result<Matrix<T>> {
            let len = rows * cols * width;
            if payload.len() < len {
                return Err(Error::Versioning("checkpoint payload is truncated".into()));
            }
            let (head, rest) = payload.split_at(len);
            payload = rest;
            Ok(Matrix::from_vec(
                rows,
                cols,
                head.chunks_exact(width).map(T::from_le_slice).collect(),
            ))
        };
        let mut params = Vec::with_capacity(header.params.len());
        for e in &header.params {
            params.push(Param {
                name: e.name.clone(),
                group: e.group,
                value: take(e.rows, e.cols)?,
            });
        }
        let optimizer = match header.adam_step {
            Some(step) => {
                let mut m = Vec::new();
                let mut v = Vec::new();
                for e in &header.params {
                    m.push(take(e.rows, e.cols)?);
                }
                for e in &header.params {
                    v.push(take(e.rows, e.cols)?);
                }
                Some(AdamState { step, m, v })
            }
            None => None,
        };
        if !payload.is_empty() {
            return Err(Error::Versioning(format!(
                "{} trailing bytes after checkpoint payload",
                payload.len()
            )));
        }
        let model = OrderedGnn::from_params(header.model, params)?;
        Ok(Checkpoint {
            model,
            train: header.train,
            optimizer,
            rng: header.rng_seed.map(|s| (s, header.rng_positions)),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Fails with a versioning error when the stored model does not match
    /// `expected` in any structural field.
    pub fn check_compatible(&self, expected: &ModelConfig) -> Result<()> {
        check_compatible(self.model.config(), expected)
    }
}

/// Structural comparison between a stored config and the one a caller
/// expects. Dropout rates are ignored.
pub fn check_compatible(stored: &ModelConfig, expected: &ModelConfig) -> Result<()> {
    let mut diffs = Vec::new();
    if stored.gate_dim() != expected.gate_dim() {
        diffs.push(format!(
            "gate width {} vs {}",
            stored.gate_dim(),
            expected.gate_dim()
        ));
    }
    for (name, a, b) in [
        ("layers", stored.layers, expected.layers),
        ("hidden", stored.hidden, expected.hidden),
        ("chunk", stored.chunk, expected.chunk),
        ("mlp_layers", stored.mlp_layers, expected.mlp_layers),
        ("layernorm_every", stored.layernorm_every, expected.layernorm_every),
        ("num_features", stored.num_features, expected.num_features),
        ("num_classes", stored.num_classes, expected.num_classes),
    ] {
        if a != b {
            diffs.push(format!("{name} {a} vs {b}"));
        }
    }
    if stored.tie_gates != expected.tie_gates {
        diffs.push("tie_gates differs".into());
    }
    if stored.variant != expected.variant {
        diffs.push(format!("variant {} vs {}", stored.variant, expected.variant));
    }
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(Error::Versioning(format!(
            "checkpoint does not match configuration: {}",
            diffs.join(", ")
        )))
    }
}

fn split_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 16 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Versioning("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Versioning(format!(
            "checkpoint version {version}, supported {CHECKPOINT_VERSION}"
        )));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let rest = &bytes[16..];
    if rest.len() < len {
        return Err(Error::Versioning("checkpoint header is truncated".into()));
    }
    let header = serde_json::from_slice(&rest[..len])?;
    Ok((header, &rest[len..]))
}

/// Precision a checkpoint file was written with.
pub fn stored_precision(path: impl AsRef<Path>) -> Result<Precision> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(split_header(&bytes)?.0.precision)
}
