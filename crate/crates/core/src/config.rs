//! Run configuration: a TOML document plus `key=value` overrides.
//!
//! Every key is optional. Relative paths resolve against the directory of
//! the config file (or the working directory for overrides alone).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::assemble::{AssemblerConfig, Strategy};
use crate::error::{Error, Result};
use crate::train::{GateMode, LrSchedule, StageConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Ngram,
    Vectors,
    Constant,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub descriptions: Option<PathBuf>,
    pub vectors: Option<PathBuf>,
    pub shorten_descriptions: bool,

    pub strategy: Strategy,
    pub k_top: usize,
    pub max_input_tokens: usize,
    pub provider: ProviderKind,
    pub exclude_answer_edges: bool,
    pub use_descriptions: bool,
    pub neighbor_descriptions: bool,
    pub use_neighbors: bool,

    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub precision1: bool,
    pub precision2: bool,
    pub precision3: bool,
    pub epochs1: usize,
    pub epochs2: usize,
    pub epochs3: usize,
    pub batch_size: usize,
    pub batch_size1: Option<usize>,
    pub batch_size2: Option<usize>,
    pub batch_size3: Option<usize>,
    pub b: usize,
    pub d_model: usize,
    pub warmup: usize,
    pub lr_multiplier: f64,
    pub threshold: f64,
    pub holdout_fraction: f64,
    pub accumulation: usize,
    pub gate_mode: GateMode,
    pub recall_gate: f64,
    pub reset_schedule: bool,
    pub init_scale: f64,
    pub seed: u64,
    pub workers: usize,
    pub eval_ks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            descriptions: None,
            vectors: None,
            shorten_descriptions: false,
            strategy: Strategy::Packed,
            k_top: 3,
            max_input_tokens: 512,
            provider: ProviderKind::Ngram,
            exclude_answer_edges: true,
            use_descriptions: true,
            neighbor_descriptions: true,
            use_neighbors: true,
            alpha1: 30_000.0,
            alpha2: 100.0,
            alpha3: 2.0,
            precision1: false,
            precision2: true,
            precision3: true,
            epochs1: 31,
            epochs2: 9,
            epochs3: 5,
            batch_size: 160,
            batch_size1: None,
            batch_size2: None,
            batch_size3: None,
            b: 768,
            d_model: 768,
            warmup: 12_000,
            lr_multiplier: 1.0,
            threshold: 0.5,
            holdout_fraction: 0.1,
            accumulation: 1,
            gate_mode: GateMode::Epochs,
            recall_gate: 0.85,
            reset_schedule: false,
            init_scale: 0.1,
            seed: 0,
            workers: 1,
            eval_ks: vec![1, 3, 5],
        }
    }
}

fn parse_override(raw: &str) -> Result<(String, toml::Value)> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{raw}` is not key=value")))?;
    let key = key.trim().to_owned();
    let value = value.trim();
    let parsed = format!("v = {value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_owned()));
    Ok((key, parsed))
}

impl RunConfig {
    /// Merge `overrides` into `base` (a TOML document, possibly empty) and validate.
    pub fn resolve(base: &str, overrides: &[String], base_dir: &Path) -> Result<Self> {
        let mut table: toml::Table = base
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for raw in overrides {
            let (key, value) = parse_override(raw)?;
            table.insert(key, value);
        }
        let mut config: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.message().to_owned()))?;
        for p in [
            &mut config.train,
            &mut config.test,
            &mut config.descriptions,
            &mut config.vectors,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        match path {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                let dir = path.parent().unwrap_or(Path::new("."));
                Self::resolve(&text, overrides, dir)
            }
            None => Self::resolve("", overrides, Path::new(".")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.k_top == 0 {
            return bad("k_top must be at least 1");
        }
        if self.max_input_tokens == 0 {
            return bad("max_input_tokens must be positive");
        }
        if self.provider == ProviderKind::Vectors && self.vectors.is_none() {
            return bad("provider = \"vectors\" needs a vectors path");
        }
        if self.b == 0 || self.d_model == 0 || self.warmup == 0 {
            return bad("b, d_model and warmup must be positive");
        }
        if !(self.lr_multiplier > 0.0 && self.lr_multiplier.is_finite()) {
            return bad("lr_multiplier must be positive");
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return bad("threshold must lie in (0, 1)");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if self.accumulation == 0 || self.workers == 0 {
            return bad("accumulation and workers must be at least 1");
        }
        if self.eval_ks.is_empty() || self.eval_ks.contains(&0) {
            return bad("eval_ks must be a nonempty list of positive integers");
        }
        Ok(())
    }

    pub fn assembler(&self) -> AssemblerConfig {
        AssemblerConfig {
            strategy: self.strategy,
            top_k: self.k_top,
            max_input_tokens: self.max_input_tokens,
            exclude_answer_edges: self.exclude_answer_edges,
            use_descriptions: self.use_descriptions,
            neighbor_descriptions: self.neighbor_descriptions,
            use_neighbors: self.use_neighbors,
        }
    }

    pub fn stages(&self) -> Vec<StageConfig> {
        let stage = |alpha, precision, epochs, batch: Option<usize>| StageConfig {
            alpha,
            use_precision: precision,
            epochs,
            batch_size: batch.unwrap_or(self.batch_size),
            threshold: self.threshold,
        };
        vec![
            stage(self.alpha1, self.precision1, self.epochs1, self.batch_size1),
            stage(self.alpha2, self.precision2, self.epochs2, self.batch_size2),
            stage(self.alpha3, self.precision3, self.epochs3, self.batch_size3),
        ]
    }

    pub fn trainer(&self) -> TrainConfig {
        TrainConfig {
            stages: self.stages(),
            schedule: LrSchedule {
                d_model: self.d_model,
                warmup: self.warmup,
                multiplier: self.lr_multiplier,
            },
            dim: self.b,
            holdout_fraction: self.holdout_fraction,
            accumulation: self.accumulation,
            seed: self.seed,
            gate: self.gate_mode,
            recall_gate: self.recall_gate,
            reset_schedule_per_stage: self.reset_schedule,
            init_scale: self.init_scale,
        }
    }

    /// Canonical JSON of the fully resolved configuration.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}
