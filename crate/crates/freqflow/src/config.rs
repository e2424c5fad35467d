//! Run configuration: one TOML file with `[model]`, `[train]`, `[data]`,
//! `[eval]` and `[synth]` sections. Every key has a default.

use std::path::{Path, PathBuf};

use freqflow_core::data::SynthSpec;
use freqflow_core::{ModelConfig, Preset, TrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub path: Option<PathBuf>,
    /// Offset between consecutive training windows.
    pub train_stride: usize,
    /// Offset between validation and test windows; the horizon when unset.
    pub eval_stride: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { path: None, train_stride: 1, eval_stride: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Horizon lengths in samples; each must not exceed the model horizon.
    pub horizons: Vec<usize>,
    /// Period of the seasonal-naive baseline; the look-back length when unset.
    pub seasonal_period: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { horizons: vec![24, 48, 96], seasonal_period: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
    pub synth: SynthSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: Preset::Shallow,
            out_dir: PathBuf::from("freqflow-out"),
            model: ModelConfig::preset(Preset::Shallow, 8, 96, 96),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
            synth: SynthSpec::default(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config: {0}")]
    Parse(String),
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Parses a config text. The preset (from `preset_override`, else the
    /// file, else shallow) sets the flow depth and correction defaults; keys
    /// written in the file win over preset defaults.
    pub fn from_toml(text: &str, preset_override: Option<Preset>) -> Result<Self, ConfigError> {
        let user: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        let file_preset = match user.get("preset") {
            Some(v) => Some(v.clone().try_into::<Preset>().map_err(|e| ConfigError::Parse(e.to_string()))?),
            None => None,
        };
        let preset = preset_override.or(file_preset).unwrap_or(Preset::Shallow);
        let mut base = RunConfig { preset, ..Default::default() };
        base.model.apply_preset(preset);
        let mut table = toml::Table::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
        merge(&mut table, user);
        let mut cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        if let Some(p) = preset_override {
            cfg.preset = p;
            cfg.model.apply_preset(p);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path, preset_override: Option<Preset>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml(&text, preset_override)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn eval_stride(&self) -> usize {
        self.data.eval_stride.unwrap_or(self.model.horizon.max(1))
    }
}
