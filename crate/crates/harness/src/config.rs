//! Campaign configuration (TOML). Every field is optional; the defaults are
//! listed in the README.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use advbench_core::asr::{ModelDims, TrainHyper};
use advbench_core::attacks::{Judge, Stage1Config, Stage2Config};
use advbench_core::experiments::{ExperimentKind, Language, PhonemeClass};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("unknown field `{field}` at line {line}")]
    UnknownField { field: String, line: usize },
    #[error("line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub phrases: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self { phrases: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub clip_norm: f64,
    pub context: usize,
    pub hidden: usize,
    pub recurrent: usize,
    /// Train any language without a checkpoint. When false, every language
    /// needs an entry in `checkpoints`.
    pub train: bool,
    pub checkpoints: BTreeMap<Language, PathBuf>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let h = TrainHyper::default();
        let d = ModelDims::default();
        Self {
            epochs: h.epochs,
            lr: h.lr,
            batch: h.batch,
            clip_norm: h.clip_norm,
            context: d.context,
            hidden: d.hidden,
            recurrent: d.recurrent,
            train: true,
            checkpoints: BTreeMap::new(),
        }
    }
}

impl ModelConfig {
    pub fn hyper(&self, seed: u64) -> TrainHyper {
        TrainHyper {
            epochs: self.epochs,
            lr: self.lr,
            batch: self.batch,
            seed,
            clip_norm: self.clip_norm,
        }
    }

    pub fn dims(&self) -> ModelDims {
        ModelDims {
            context: self.context,
            hidden: self.hidden,
            recurrent: self.recurrent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    pub alpha_star: f64,
    pub m: usize,
}

impl Default for StatsConfig {
    fn default() -> Self {
        Self { alpha_star: 0.05, m: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub seed: u64,
    pub languages: Vec<Language>,
    /// Experiment numbers 1–5; 5 runs all three phoneme classes.
    pub experiments: Vec<u8>,
    /// Overrides the per-kind default (40, or 7 per phoneme class).
    pub n_samples: Option<usize>,
    pub out: PathBuf,
    pub corpus: CorpusConfig,
    pub model: ModelConfig,
    pub stage1: Stage1Config,
    pub stage2: Stage2Config,
    pub judge: Judge,
    pub stats: StatsConfig,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            languages: Language::ALL.to_vec(),
            experiments: vec![1, 2, 3, 4, 5],
            n_samples: None,
            out: PathBuf::from("out"),
            corpus: CorpusConfig::default(),
            model: ModelConfig::default(),
            stage1: Stage1Config::default(),
            stage2: Stage2Config::default(),
            judge: Judge::Greedy,
            stats: StatsConfig::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.languages.is_empty() {
            return bad("languages must not be empty".into());
        }
        if let Some(e) = self.experiments.iter().find(|&&e| !(1..=5).contains(&e)) {
            return bad(format!("experiment {e} is not in 1..=5"));
        }
        if self.n_samples == Some(0) {
            return bad("n_samples must be at least 1".into());
        }
        if self.corpus.phrases < 2 {
            return bad("corpus.phrases must be at least 2".into());
        }
        if self.model.epochs == 0 || self.model.batch == 0 {
            return bad("model.epochs and model.batch must be at least 1".into());
        }
        self.stage1.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        self.stage2.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if advbench_core::stats::bonferroni_alpha(self.stats.alpha_star, self.stats.m).is_err() {
            return bad("stats needs 0 < alpha_star <= 1 and m >= 1".into());
        }
        for lang in &self.languages {
            match self.model.checkpoints.get(lang) {
                Some(p) if !p.exists() => return bad(format!("checkpoint {} does not exist", p.display())),
                None if !self.model.train => {
                    return bad(format!("language {lang} has no checkpoint and model.train is false"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Experiment kinds in run order; 5 expands to the three phoneme classes.
    pub fn kinds(&self) -> Vec<ExperimentKind> {
        let mut out = Vec::new();
        for &e in &self.experiments {
            match ExperimentKind::from_number(e) {
                Some(k) => out.push(k),
                None => out.extend(PhonemeClass::ALL.map(ExperimentKind::PhonemeFlip)),
            }
        }
        out
    }

    pub fn samples_for(&self, kind: ExperimentKind) -> usize {
        self.n_samples.unwrap_or(kind.default_samples())
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

pub fn parse_config(text: &str) -> Result<CampaignConfig, ConfigError> {
    let cfg: CampaignConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(text, s.start));
        let msg = e.message().to_string();
        match msg.strip_prefix("unknown field `").and_then(|r| r.split('`').next()) {
            Some(field) => ConfigError::UnknownField {
                field: field.to_string(),
                line,
            },
            None => ConfigError::Parse { line, column, msg },
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<CampaignConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
