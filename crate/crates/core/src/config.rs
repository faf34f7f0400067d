//! Session configuration, read from TOML, with dotted-key overrides.
//!
//! ```toml
//! [dataset]
//! path = "reviews.jsonl"
//! format = "text-jsonl"
//!
//! [selector]
//! kind = "seu"
//!
//! [refinement]
//! enabled = true
//! tune = true
//!
//! [run]
//! iterations = 50
//! eval_every = 5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contextualizer::RefinementConfig;
use crate::corpus::{IngestConfig, InputFormat};
use crate::end_model::{Metric, TrainConfig};
use crate::error::{Error, Result};
use crate::label_model::LabelModelConfig;
use crate::selection::SelectorConfig;
use crate::simulator::SimulatorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    /// Relative paths are resolved against the config file's directory.
    pub path: PathBuf,
    pub format: InputFormat,
    /// Name under which the service exposes the dataset.
    pub name: String,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: PathBuf::new(),
            format: InputFormat::TextJsonl,
            name: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// LFs come from the gold-label simulator.
    #[default]
    Simulated,
    /// LFs are submitted by a person through the service.
    Human,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub iterations: usize,
    pub eval_every: usize,
    pub metric: Metric,
    pub seed: u64,
    pub runs: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Simulated,
            iterations: 50,
            eval_every: 5,
            metric: Metric::Accuracy,
            seed: 0,
            runs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub dataset: DatasetConfig,
    pub ingest: IngestConfig,
    pub selector: SelectorConfig,
    pub label_model: LabelModelConfig,
    pub refinement: RefinementConfig,
    pub end_model: TrainConfig,
    pub simulator: SimulatorConfig,
    pub run: RunConfig,
}

impl SessionConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let config: SessionConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Reads a config file and resolves a relative dataset path against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e)))?;
        if !config.dataset.path.as_os_str().is_empty() && config.dataset.path.is_relative() {
            if let Some(dir) = path.parent() {
                config.dataset.path = dir.join(&config.dataset.path);
            }
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.ingest.validate()?;
        self.label_model.validate()?;
        self.refinement.validate()?;
        self.end_model.validate()?;
        self.simulator.validate()?;
        if self.run.eval_every == 0 {
            return Err(Error::Config("run.eval_every must be >= 1".into()));
        }
        if self.run.runs == 0 {
            return Err(Error::Config("run.runs must be >= 1".into()));
        }
        Ok(())
    }

    /// Applies `section.key=value`. The key must already exist; the value is
    /// parsed as a TOML literal, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let (key, raw) = (key.trim(), raw.trim());
        let mut root = toml::Value::try_from(&*self).map_err(|e| Error::Config(e.to_string()))?;
        let path: Vec<&str> = key.split('.').collect();
        let (last, parents) = path.split_last().expect("split yields one part");
        let mut table = root.as_table_mut().expect("config is a table");
        for part in parents {
            table = table
                .get_mut(*part)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        }
        let slot = table
            .get_mut(*last)
            .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?;
        *slot = parse_value(raw, slot);
        let updated: SessionConfig = root
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("override {key}: {}", e.message())))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }
}

fn parse_value(raw: &str, current: &toml::Value) -> toml::Value {
    let parsed = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    match (current, parsed) {
        (toml::Value::Float(_), toml::Value::Integer(i)) => toml::Value::Float(i as f64),
        (toml::Value::Array(cur), toml::Value::Array(items)) if cur.iter().all(toml::Value::is_float) => {
            toml::Value::Array(
                items
                    .into_iter()
                    .map(|v| match v {
                        toml::Value::Integer(i) => toml::Value::Float(i as f64),
                        other => other,
                    })
                    .collect(),
            )
        }
        (toml::Value::String(_), v @ (toml::Value::Integer(_) | toml::Value::Float(_) | toml::Value::Boolean(_))) => {
            toml::Value::String(v.to_string())
        }
        (_, v) => v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::SelectorKind;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(SessionConfig::from_toml_str("").unwrap(), SessionConfig::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let mut c = SessionConfig::default();
        c.dataset.path = "data.jsonl".into();
        c.refinement.enabled = true;
        let s = c.to_toml_string();
        assert_eq!(SessionConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn overrides_touch_declared_keys_only() {
        let mut c = SessionConfig::default();
        c.apply_override("selector.kind=random").unwrap();
        assert_eq!(c.selector.kind, SelectorKind::Random);
        c.apply_override("refinement.percentile=50").unwrap();
        assert_eq!(c.refinement.percentile, 50.0);
        c.apply_override("refinement.grid=[10, 90.5]").unwrap();
        assert_eq!(c.refinement.grid, vec![10.0, 90.5]);
        c.apply_override("run.seed = 9").unwrap();
        assert_eq!(c.run.seed, 9);
        c.apply_override("dataset.name=42").unwrap();
        assert_eq!(c.dataset.name, "42");
        assert!(c.apply_override("selector.bogus=1").is_err());
        assert!(c.apply_override("nosuch.kind=1").is_err());
        assert!(c.apply_override("selector.kind=telepathy").is_err());
        assert!(c.apply_override("refinement.percentile=0").is_err());
        assert!(c.apply_override("selector.kind").is_err());
        assert_eq!(c.selector.kind, SelectorKind::Random, "failed override leaves config unchanged");
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(SessionConfig::from_toml_str("[selector]\nkind = \"seu\"\nextra = 1\n").is_err());
    }

    #[test]
    fn load_resolves_relative_dataset_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("exp.toml");
        std::fs::write(&p, "[dataset]\npath = \"d.jsonl\"\n").unwrap();
        let c = SessionConfig::load(&p).unwrap();
        assert_eq!(c.dataset.path, dir.path().join("d.jsonl"));
    }
}
