//! Checkpoint files.
//!
//! ```text
//! freqflow-checkpoint\n
//! <header byte length>\n
//! <TOML header: schema_version, run config, node stats, parameter registry>
//! <little-endian f64 values, registry order>
//! ```

use std::fs;
use std::path::Path;

use freqflow_core::data::NodeStats;
use freqflow_core::param::ParamGroup;
use freqflow_core::Model;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const MAGIC: &str = "freqflow-checkpoint";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint: {0}")]
    Format(String),
    #[error("checkpoint schema version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("checkpoint truncated: {0}")]
    Truncated(String),
    #[error("parameter {name}: stored shape {stored:?}, model expects {expected:?}")]
    Shape { name: String, stored: Vec<usize>, expected: Vec<usize> },
    #[error(transparent)]
    Model(#[from] freqflow_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub complex: bool,
    pub trainable: bool,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    schema_version: u32,
    node_ids: Vec<String>,
    node_stats: NodeStats,
    config: RunConfig,
    params: Vec<ParamEntry>,
}

/// A trained model plus everything needed to run it on raw data.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub config: RunConfig,
    pub node_ids: Vec<String>,
    pub node_stats: NodeStats,
}

impl Checkpoint {
    /// `config.model` is replaced by the model's own (resolved) config.
    pub fn new(model: Model, mut config: RunConfig, node_ids: Vec<String>, node_stats: NodeStats) -> Self {
        config.model = model.config.clone();
        Checkpoint { model, config, node_ids, node_stats }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let params = self
            .model
            .store
            .iter()
            .map(|(_, p)| ParamEntry {
                name: p.name.clone(),
                group: p.group,
                shape: p.value.shape().to_vec(),
                complex: p.value.is_complex(),
                trainable: p.trainable,
                dtype: "f64le".into(),
            })
            .collect();
        let header = Header {
            schema_version: SCHEMA_VERSION,
            node_ids: self.node_ids.clone(),
            node_stats: self.node_stats.clone(),
            config: self.config.clone(),
            params,
        };
        let text = toml::to_string(&header).expect("header serializes");
        let mut out = format!("{MAGIC}\n{}\n{text}", text.len()).into_bytes();
        for (_, p) in self.model.store.iter() {
            for v in p.value.flat() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let rest = bytes
            .strip_prefix(MAGIC.as_bytes())
            .and_then(|r| r.strip_prefix(b"\n"))
            .ok_or_else(|| CheckpointError::Format("bad magic".into()))?;
        let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| CheckpointError::Truncated("header length".into()))?;
        let len: usize = std::str::from_utf8(&rest[..nl])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| CheckpointError::Format("bad header length".into()))?;
        let rest = &rest[nl + 1..];
        if rest.len() < len {
            return Err(CheckpointError::Truncated(format!("header needs {len} bytes, {} present", rest.len())));
        }
        let text = std::str::from_utf8(&rest[..len]).map_err(|_| CheckpointError::Format("header is not UTF-8".into()))?;
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| CheckpointError::Format(e.to_string()))?;
        let found = table.get("schema_version").and_then(toml::Value::as_integer).ok_or_else(|| CheckpointError::Format("missing schema_version".into()))?;
        if found != i64::from(SCHEMA_VERSION) {
            return Err(CheckpointError::Version { found: found.clamp(0, u32::MAX as i64) as u32, expected: SCHEMA_VERSION });
        }
        let header: Header = table.try_into().map_err(|e: toml::de::Error| CheckpointError::Format(e.to_string()))?;
        let mut model = Model::new(header.config.model.clone(), header.config.train.seed)?;
        if model.store.len() != header.params.len() {
            return Err(CheckpointError::Format(format!("{} stored parameters, model has {}", header.params.len(), model.store.len())));
        }
        let mut data = &rest[len..];
        for (entry, p) in header.params.iter().zip(model.store.iter_mut()) {
            if entry.name != p.name || entry.shape != p.value.shape() || entry.complex != p.value.is_complex() {
                return Err(CheckpointError::Shape { name: entry.name.clone(), stored: entry.shape.clone(), expected: p.value.shape().to_vec() });
            }
            let values = p.value.flat_mut();
            let need = values.len() * 8;
            if data.len() < need {
                return Err(CheckpointError::Truncated(format!("data for {}", entry.name)));
            }
            for (v, chunk) in values.iter_mut().zip(data[..need].chunks_exact(8)) {
                *v = f64::from_le_bytes(chunk.try_into().expect("8 bytes"));
            }
            p.trainable = entry.trainable;
            data = &data[need..];
        }
        if !data.is_empty() {
            return Err(CheckpointError::Format(format!("{} trailing bytes", data.len())));
        }
        Ok(Checkpoint { model, config: header.config, node_ids: header.node_ids, node_stats: header.node_stats })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use freqflow_core::{ModelConfig, Preset};

    fn sample() -> Checkpoint {
        let cfg = ModelConfig::preset(Preset::Shallow, 2, 16, 8);
        let cfg = ModelConfig { n_heads: 2, flow_hidden: 4, ..cfg };
        let mut model = Model::new(cfg, 3).unwrap();
        for (i, p) in model.store.iter_mut().enumerate() {
            p.value.flat_mut().iter_mut().enumerate().for_each(|(j, v)| *v += (i * 31 + j) as f64 * 1e-3);
        }
        let stats = NodeStats { mean: vec![1.0, 2.0], std: vec![0.5, 3.0] };
        Checkpoint::new(model, RunConfig::default(), vec!["a".into(), "b".into()], stats)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back.model.store, ck.model.store);
        assert_eq!(back.config, ck.config);
        assert_eq!(back.node_stats, ck.node_stats);
    }

    #[test]
    fn distinct_errors() {
        let bytes = sample().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(CheckpointError::Format(_))));
        assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]), Err(CheckpointError::Truncated(_))));
        let patch = |from: &[u8], to: &[u8]| {
            let pos = bytes.windows(from.len()).position(|w| w == from).unwrap();
            let mut out = bytes.clone();
            out[pos..pos + to.len()].copy_from_slice(to);
            out
        };
        let v9 = patch(b"schema_version = 1", b"schema_version = 9");
        assert!(matches!(Checkpoint::from_bytes(&v9), Err(CheckpointError::Version { found: 9, expected: 1 })));
        let wider = patch(b"flow_hidden = 4", b"flow_hidden = 5");
        assert!(matches!(Checkpoint::from_bytes(&wider), Err(CheckpointError::Shape { .. })));
    }
}
