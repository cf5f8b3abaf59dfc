//! Run configuration: one JSON document drives every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::{CONSENSUS_PRIMES, CONSENSUS_REPEATS, NVA_TARGET_KS};
use crate::corpus::NVA_TAGS;
use crate::error::{Error, Result};
use crate::neural::ModelConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMode {
    Tabular,
    Neural,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSettings {
    pub alpha0: f64,
    pub kappa: f64,
    pub sweeps: usize,
}

impl Default for TabularSettings {
    fn default() -> Self {
        TabularSettings {
            alpha0: 0.5,
            kappa: 50.0,
            sweeps: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSettings {
    pub tags: Vec<String>,
    pub per_pos_cap: usize,
    pub variance_fraction: f64,
    pub target_ks: Vec<usize>,
    pub top_k: usize,
    pub resolutions: Vec<usize>,
    pub repeats: usize,
    /// Also cluster with plain k-means at each target K, aligned to the
    /// consensus labels.
    pub kmeans_baseline: bool,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        AnalysisSettings {
            tags: NVA_TAGS.iter().map(|s| s.to_string()).collect(),
            per_pos_cap: 200,
            variance_fraction: 0.9999,
            target_ks: NVA_TARGET_KS.to_vec(),
            top_k: 3,
            resolutions: CONSENSUS_PRIMES.to_vec(),
            repeats: CONSENSUS_REPEATS,
            kmeans_baseline: true,
        }
    }
}

/// `model.seed` is the single global seed; every other stream derives from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub tokens: PathBuf,
    pub tagged: PathBuf,
    pub output: PathBuf,
    pub lowercase: bool,
    pub max_vocab: usize,
    pub train_mode: TrainMode,
    /// Adds a wall-clock column to the training log (breaks byte-identical
    /// reruns).
    pub log_wallclock: bool,
    pub model: ModelConfig,
    pub tabular: TabularSettings,
    pub analysis: AnalysisSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            tokens: PathBuf::from("tokens.txt"),
            tagged: PathBuf::from("tagged.tsv"),
            output: PathBuf::from("out"),
            lowercase: false,
            max_vocab: 20_000,
            train_mode: TrainMode::Tabular,
            log_wallclock: false,
            model: ModelConfig::default(),
            tabular: TabularSettings::default(),
            analysis: AnalysisSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Reads `path`, applies `key=value` overrides (dotted keys, JSON or bare
    /// string values) and the seed override, then resolves relative paths
    /// against the config file's directory.
    pub fn load(path: &Path, overrides: &[String], seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        if let Some(seed) = seed {
            apply_override(&mut doc, &format!("model.seed={seed}"))?;
        }
        let mut config: RunConfig =
            serde_json::from_value(doc).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut config.tokens, &mut config.tagged, &mut config.output] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_vocab == 0 {
            return Err(Error::Config("max_vocab must be >= 1".into()));
        }
        let a = &self.analysis;
        if a.tags.is_empty() || a.per_pos_cap == 0 || a.repeats == 0 || a.resolutions.is_empty() {
            return Err(Error::Config(
                "analysis needs tags, per_pos_cap >= 1, repeats >= 1 and resolutions".into(),
            ));
        }
        if !(a.variance_fraction > 0.0 && a.variance_fraction <= 1.0) {
            return Err(Error::Config("variance_fraction must lie in (0, 1]".into()));
        }
        if !(self.tabular.alpha0 > 0.0 && self.tabular.alpha0 <= 1.0 && self.tabular.kappa > 0.0) {
            return Err(Error::Config("tabular alpha0 must lie in (0, 1] and kappa > 0".into()));
        }
        // vocab_size is fixed by the built vocabulary, so only the remaining
        // model fields are checked here.
        let mut model = self.model.clone();
        model.vocab_size = model.vocab_size.max(1);
        model.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

fn apply_override(doc: &mut Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{spec}` is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not inside an object")))?;
        if i + 1 == parts.len() {
            if !obj.contains_key(*part) {
                return Err(Error::Config(format!("unknown config key `{key}`")));
            }
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj
            .get_mut(*part)
            .ok_or_else(|| Error::Config(format!("unknown config key `{key}`")))?;
    }
    unreachable!("split yields at least one part")
}
