use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::dataset::Split;
use super::synth::SynthConfig;
use crate::ensemble::RerankConfig;
use crate::error::{Error, Result};
use crate::evaluator::EvalTrainConfig;
use crate::generation::GenerationConfig;
use crate::metrics::MetricConfig;
use crate::numerics::RmsProp;

/// One generator of the roster.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub tag: String,
    pub init: String,
    pub persist: String,
    #[serde(default = "default_depth")]
    pub depth: usize,
}

fn default_depth() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmTrainConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub dropout_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: RmsProp,
}

impl Default for LmTrainConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            embed_dim: 64,
            dropout_rate: 0.1,
            epochs: 10,
            batch_size: 32,
            optimizer: RmsProp { learning_rate: 2e-3, ..RmsProp::default() },
        }
    }
}

/// Evaluator architecture; vocabulary size and video dimension come from
/// the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluatorSpec {
    pub feature: String,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub joint_dim: usize,
    pub margin: f64,
    pub n_neg: usize,
}

impl Default for EvaluatorSpec {
    fn default() -> Self {
        Self {
            feature: "gcnn+dt+categ".into(),
            embed_dim: 64,
            filter_widths: vec![2, 3, 4],
            filters_per_width: 64,
            joint_dim: 64,
            margin: 0.2,
            n_neg: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Dataset document; when absent the synthetic benchmark is generated.
    pub dataset: Option<PathBuf>,
    /// Feature files to load alongside `dataset`.
    pub features: Vec<PathBuf>,
    pub synth: SynthConfig,
    pub min_count: usize,
    pub train_split: Split,
    pub eval_split: Split,
    pub models: Vec<ModelSpec>,
    pub lm: LmTrainConfig,
    pub generation: GenerationConfig,
    pub evaluator: EvaluatorSpec,
    pub evaluator_training: EvalTrainConfig,
    pub rerank: RerankConfig,
    pub metrics: MetricConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            dataset: None,
            features: Vec::new(),
            synth: SynthConfig::default(),
            min_count: 1,
            train_split: Split::Train,
            eval_split: Split::Val,
            models: vec![
                ModelSpec { tag: "A".into(), init: "gcnn".into(), persist: "gcnn+categ".into(), depth: 2 },
                ModelSpec { tag: "B".into(), init: "dt".into(), persist: "dt+categ".into(), depth: 2 },
            ],
            lm: LmTrainConfig::default(),
            generation: GenerationConfig::default(),
            evaluator: EvaluatorSpec::default(),
            evaluator_training: EvalTrainConfig::default(),
            rerank: RerankConfig::default(),
            metrics: MetricConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML; relative paths are resolved against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(d) = &cfg.dataset {
            cfg.dataset = Some(base.join(d));
        }
        cfg.features = cfg.features.iter().map(|f| base.join(f)).collect();
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(Error::Config("model roster is empty".into()));
        }
        let mut tags = BTreeSet::new();
        for m in &self.models {
            if m.tag.is_empty() || !m.tag.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
                return Err(Error::Config(format!("model tag `{}` must be non-empty [A-Za-z0-9_-]", m.tag)));
            }
            if !tags.insert(m.tag.as_str()) {
                return Err(Error::Config(format!("duplicate model tag `{}`", m.tag)));
            }
            if m.depth == 0 {
                return Err(Error::Config(format!("model `{}` has depth 0", m.tag)));
            }
        }
        if self.min_count == 0 {
            return Err(Error::Config("min_count must be >= 1".into()));
        }
        if self.lm.batch_size == 0 || self.evaluator_training.batch_size == 0 {
            return Err(Error::Config("batch sizes must be > 0".into()));
        }
        if self.train_split == self.eval_split {
            return Err(Error::Config("train and eval splits must differ".into()));
        }
        self.lm.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.evaluator_training.optimizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.generation.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}
