//! Run configuration: a TOML file with nested sections, overridden by
//! `CUSTOMNET_SECTION__KEY` environment variables and then by explicit
//! `section.key=value` assignments.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datapipe::DataConfig;
use crate::diffusion::{ModelConfig, ScheduleConfig, TrainConfig};
use crate::digest::digest_of;
use crate::error::{Error, Result};
use crate::eval::{EvalConfig, ProbeConfig};

pub const ENV_PREFIX: &str = "CUSTOMNET_";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub pipeline: DataConfig,
    /// Records of the main training set.
    pub train_size: usize,
    pub train_seed: u64,
    /// Object-only multi-view records for the pretraining stage.
    pub pretrain_size: usize,
    pub pretrain_seed: u64,
    /// Include natural-pipeline pairs in the main set.
    pub natural: bool,
    /// Where built datasets are cached.
    pub root: PathBuf,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            pipeline: DataConfig::default(),
            train_size: 5_000,
            train_seed: 1,
            pretrain_size: 5_000,
            pretrain_seed: 2,
            natural: true,
            root: PathBuf::from("data"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServiceConfig {
    pub addr: String,
    /// Concurrent sampling jobs.
    pub workers: usize,
    /// Requests allowed to wait for a worker before new ones are refused.
    pub queue_depth: usize,
    pub timeout_ms: u64,
    pub max_steps: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            addr: "127.0.0.1:8080".into(),
            workers: 1,
            queue_depth: 16,
            timeout_ms: 60_000,
            max_steps: 200,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub probe: ProbeConfig,
    pub service: ServiceConfig,
}

/// Parses a scalar override: TOML syntax when it parses, else a string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, path: &str, value: toml::Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("bad key {path:?}")));
    }
    let mut table = root;
    for k in &keys[..keys.len() - 1] {
        let entry = table
            .entry(k.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{path}: {k} is not a section")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Resolves a configuration from optional file text, environment
    /// variables and `key=value` assignments, in increasing precedence.
    pub fn resolve(
        text: Option<&str>,
        env: impl IntoIterator<Item = (String, String)>,
        sets: &[String],
    ) -> Result<Self> {
        let mut table: toml::Table = match text {
            Some(t) => toml::from_str(t).map_err(|e| Error::Config(e.to_string()))?,
            None => toml::Table::new(),
        };
        let mut env: Vec<(String, String)> = env
            .into_iter()
            .filter_map(|(k, v)| k.strip_prefix(ENV_PREFIX).map(|k| (k.to_lowercase().replace("__", "."), v)))
            .collect();
        env.sort();
        for (k, v) in env {
            set_path(&mut table, &k, parse_value(&v))?;
        }
        for s in sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {s:?} is not key=value")))?;
            set_path(&mut table, k.trim(), parse_value(v.trim()))?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, sets: &[String]) -> Result<Self> {
        let text = path
            .map(|p| std::fs::read_to_string(p).map_err(|e| Error::io(p, e)))
            .transpose()?;
        Self::resolve(text.as_deref(), std::env::vars(), sets)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        if self.model.resolution != self.data.pipeline.resolution {
            return Err(Error::invalid(
                "model.resolution",
                format!("{} differs from data.pipeline.resolution {}", self.model.resolution, self.data.pipeline.resolution),
            ));
        }
        if self.data.train_size == 0 {
            return Err(Error::invalid("data.train_size", "must be positive"));
        }
        if self.train.pretrain_steps > 0 && self.data.pretrain_size == 0 {
            return Err(Error::invalid("data.pretrain_size", "pretraining needs a dataset"));
        }
        if [self.data.train_seed, self.data.pretrain_seed].contains(&self.eval.seed) {
            return Err(Error::invalid("eval.seed", "held-out seed must differ from the training seeds"));
        }
        if self.service.workers == 0 {
            return Err(Error::invalid("service.workers", "must be positive"));
        }
        Ok(())
    }

    /// Digest of the whole canonicalized configuration.
    pub fn digest(&self) -> String {
        digest_of(self)
    }

    /// Digest of the parts that fix the parameter layout and the noise
    /// process; checkpoints carry this one.
    pub fn architecture_digest(&self) -> String {
        digest_of(&(&self.model, &self.schedule))
    }

    pub fn training_seeds(&self) -> Vec<u64> {
        vec![self.data.train_seed, self.data.pretrain_seed]
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_apply_in_order() {
        let env = vec![
            ("CUSTOMNET_TRAIN__LR".to_string(), "0.5".to_string()),
            ("CUSTOMNET_TRAIN__STEPS".to_string(), "10".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let c = RunConfig::resolve(
            Some("[train]\nlr = 0.1\npretrain_steps = 0\n"),
            env,
            &["train.steps=20".into()],
        )
        .unwrap();
        assert_eq!(c.train.lr, 0.5);
        assert_eq!(c.train.steps, 20);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = RunConfig::resolve(Some("[train]\nlearning_rate = 1.0\n"), vec![], &[]).unwrap_err();
        assert!(err.to_string().contains("learning_rate"), "{err}");
        assert!(RunConfig::resolve(None, vec![], &["bogus.key=1".into()]).is_err());
    }

    #[test]
    fn digest_is_canonical() {
        let a = RunConfig::resolve(Some("[train]\nlr = 0.001\nseed = 3\n"), vec![], &[]).unwrap();
        let b = RunConfig::resolve(Some("[train]\nseed = 3\nlr = 0.001\n"), vec![], &[]).unwrap();
        assert_eq!(a.digest(), b.digest());
        let toml = a.to_toml().unwrap();
        let c = RunConfig::resolve(Some(&toml), vec![], &[]).unwrap();
        assert_eq!(c, a);
        assert_eq!(c.digest(), a.digest());
    }
}
