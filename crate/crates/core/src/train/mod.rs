//! Staged training of the token-embedding encoder and classification head.
//!
//! Stage one uses a positive-weighted BCE with a large weight so the model
//! learns to fire on every plausible label; later stages multiply each
//! sample's loss by the inverse of its (floored) precision, with the
//! precision held constant during differentiation.

pub mod checkpoint;
pub mod loss;
pub mod model;
pub mod schedule;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics;
use crate::text::Tokenizer;
use loss::{logit_loss_and_grad, precision_coefficient};
use model::{clamped_sigmoid, logits, Encoder, MeanEncoder, ModelParams, Vocab};
pub use schedule::{lr_at, LrSchedule};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageConfig {
    pub alpha: f64,
    pub use_precision: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub threshold: f64,
}

impl StageConfig {
    pub fn new(alpha: f64, use_precision: bool, epochs: usize, batch_size: usize) -> Self {
        Self {
            alpha,
            use_precision,
            epochs,
            batch_size,
            threshold: 0.5,
        }
    }

    fn validate(&self, stage: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("stage {stage}: alpha must be positive")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config(format!("stage {stage}: batch_size must be positive")));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("stage {stage}: threshold must lie in (0, 1)")));
        }
        Ok(())
    }
}

/// Epoch budgets and batch sizes per stage for the two reference benchmarks.
pub fn wn18rr_stages() -> Vec<StageConfig> {
    vec![
        StageConfig::new(30_000.0, false, 31, 160),
        StageConfig::new(100.0, true, 9, 160),
        StageConfig::new(2.0, true, 5, 160),
    ]
}

pub fn fb15k237_stages() -> Vec<StageConfig> {
    vec![
        StageConfig::new(30_000.0, false, 42, 320),
        StageConfig::new(20.0, true, 7, 160),
        StageConfig::new(2.0, true, 12, 160),
    ]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Every stage runs its full epoch budget.
    Epochs,
    /// Stage one ends as soon as holdout recall reaches the gate.
    Recall,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub stages: Vec<StageConfig>,
    pub schedule: LrSchedule,
    pub dim: usize,
    pub holdout_fraction: f64,
    pub accumulation: usize,
    pub seed: u64,
    pub gate: GateMode,
    pub recall_gate: f64,
    pub reset_schedule_per_stage: bool,
    pub init_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stages: wn18rr_stages(),
            schedule: LrSchedule::default(),
            dim: 768,
            holdout_fraction: 0.1,
            accumulation: 1,
            seed: 0,
            gate: GateMode::Epochs,
            recall_gate: 0.85,
            reset_schedule_per_stage: false,
            init_scale: 0.1,
        }
    }
}

/// A tokenized input and the label columns it is positive for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedSample {
    pub tokens: Vec<usize>,
    pub positives: Vec<usize>,
}

impl EncodedSample {
    fn bits(&self, k: usize) -> Vec<u8> {
        let mut bits = vec![0u8; k];
        for &j in &self.positives {
            bits[j] = 1;
        }
        bits
    }
}

/// Everything `train` consumes: the token and label spaces plus encoded samples.
#[derive(Clone, Debug, Default)]
pub struct TrainData {
    pub vocab: Vocab,
    pub labels: Vec<String>,
    pub samples: Vec<EncodedSample>,
}

impl TrainData {
    /// Tokenize texts, growing the vocabulary, and map label names to columns.
    pub fn from_texts<'a>(
        rows: impl IntoIterator<Item = (&'a str, &'a [String])>,
        labels: Vec<String>,
        tokenizer: &dyn Tokenizer,
    ) -> Result<Self> {
        let columns: std::collections::HashMap<&str, usize> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut vocab = Vocab::default();
        let mut samples = Vec::new();
        for (text, names) in rows {
            let tokens = tokenizer
                .tokenize(text)
                .into_iter()
                .map(|t| vocab.insert(t))
                .collect();
            let mut positives = Vec::with_capacity(names.len());
            for n in names {
                let j = *columns
                    .get(n.as_str())
                    .ok_or_else(|| Error::UnindexedLabel(n.clone()))?;
                if !positives.contains(&j) {
                    positives.push(j);
                }
            }
            samples.push(EncodedSample { tokens, positives });
        }
        Ok(Self {
            vocab,
            labels,
            samples,
        })
    }
}

/// Per-sample multipliers: `1 / max(precision, 0.01)` with precision stages, else 1.
pub fn precision_coefficients(
    params: &ModelParams,
    encoder: &dyn Encoder,
    batch: &[EncodedSample],
    stage: &StageConfig,
) -> Vec<f64> {
    if !stage.use_precision {
        return vec![1.0; batch.len()];
    }
    batch
        .iter()
        .map(|s| {
            let z = logits(params, &encoder.encode(params, &s.tokens));
            let probs: Vec<f64> = z.into_iter().map(clamped_sigmoid).collect();
            precision_coefficient(loss::sample_precision(&probs, &s.bits(params.n_labels()), stage.threshold))
        })
        .collect()
}

/// Mean over the batch of `coefficient_i * stage-one loss_i`, from unclamped logits.
pub fn batch_objective(
    params: &ModelParams,
    encoder: &dyn Encoder,
    batch: &[EncodedSample],
    alpha: f64,
    coefficients: &[f64],
) -> f64 {
    let mut scratch = vec![0.0; params.n_labels()];
    let total: f64 = batch
        .iter()
        .zip(coefficients)
        .map(|(s, c)| {
            let z = logits(params, &encoder.encode(params, &s.tokens));
            c * logit_loss_and_grad(&z, &s.positives, alpha, &mut scratch)
        })
        .sum();
    total / batch.len() as f64
}

/// Exact gradient of the batch loss and the loss itself. Precision
/// coefficients are treated as constants.
pub fn gradients(
    params: &ModelParams,
    encoder: &dyn Encoder,
    batch: &[EncodedSample],
    stage: &StageConfig,
) -> Result<(ModelParams, f64)> {
    if batch.is_empty() {
        return Err(Error::invalid("gradient of an empty batch"));
    }
    let coefficients = precision_coefficients(params, encoder, batch, stage);
    let mut grads = params.zeros_like();
    let dim = params.dim;
    let k = params.n_labels();
    let n = batch.len() as f64;
    let mut dz = vec![0.0; k];
    let mut dh = vec![0.0; dim];
    let mut total = 0.0;
    for (s, &c) in batch.iter().zip(&coefficients) {
        let h = encoder.encode(params, &s.tokens);
        let z = logits(params, &h);
        let l = logit_loss_and_grad(&z, &s.positives, stage.alpha, &mut dz);
        if !l.is_finite() {
            return Err(Error::invalid(format!("non-finite sample loss {l}")));
        }
        total += c * l;
        let scale = c / n;
        dh.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..k {
            let g = dz[j] * scale;
            grads.classifier_bias[j] += g;
            let w = params.weight_row(j);
            let gw = &mut grads.classifier_weights[j * dim..(j + 1) * dim];
            for d in 0..dim {
                gw[d] += g * h[d];
                dh[d] += g * w[d];
            }
        }
        encoder.backward(params, &s.tokens, &dh, &mut grads);
    }
    Ok((grads, total / n))
}

/// A first-order update rule.
pub trait Optimizer {
    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64);
}

#[derive(Clone, Copy, Debug, Default)]
pub struct Sgd;

impl Optimizer for Sgd {
    fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        for (p, g) in params.values_mut().zip(grads.values()) {
            *p -= lr * g;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    RecallGate,
    EpochBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEntry {
    Epoch {
        stage: usize,
        epoch: usize,
        step: u64,
        lr: f64,
        loss: f64,
        holdout_recall: Option<f64>,
        holdout_p_at_1: Option<f64>,
    },
    Transition {
        stage: usize,
        epochs_run: usize,
        trigger: Trigger,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub entries: Vec<LogEntry>,
}

impl StageLog {
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("log entries serialize"));
            out.push('\n');
        }
        out
    }

    /// Holdout metrics of the last logged epoch.
    pub fn last_holdout(&self) -> Option<(f64, f64)> {
        self.entries.iter().rev().find_map(|e| match e {
            LogEntry::Epoch {
                holdout_recall: Some(r),
                holdout_p_at_1: Some(p),
                ..
            } => Some((*r, *p)),
            _ => None,
        })
    }
}

/// Trained parameters with the token and label spaces they index.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub vocab: Vocab,
    pub labels: Vec<String>,
    pub params: ModelParams,
    pub fingerprint: String,
}

impl Model {
    pub fn logits(&self, tokens: &[usize]) -> Vec<f64> {
        logits(&self.params, &MeanEncoder.encode(&self.params, tokens))
    }

    pub fn predict(&self, tokens: &[usize]) -> Vec<f64> {
        model::predict(&self.params, &MeanEncoder, tokens)
    }

    pub fn encode_text(&self, text: &str, tokenizer: &dyn Tokenizer) -> Vec<usize> {
        self.vocab.encode(text, tokenizer)
    }

    /// Encode evaluation rows with this model's vocabulary. Labels outside
    /// the label space are dropped; the second value counts them.
    pub fn encode_rows<'a>(
        &self,
        rows: impl IntoIterator<Item = (&'a str, &'a [String])>,
    ) -> (Vec<EncodedSample>, usize) {
        let tokenizer = self.tokenizer();
        let columns: std::collections::HashMap<&str, usize> = self
            .labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.as_str(), i))
            .collect();
        let mut dropped = 0;
        let samples = rows
            .into_iter()
            .map(|(text, names)| {
                let mut positives = Vec::new();
                for n in names {
                    match columns.get(n.as_str()) {
                        Some(&j) if !positives.contains(&j) => positives.push(j),
                        Some(_) => {}
                        None => dropped += 1,
                    }
                }
                EncodedSample {
                    tokens: self.vocab.encode(text, &tokenizer),
                    positives,
                }
            })
            .collect();
        (samples, dropped)
    }

    /// Tokenizer that keeps every multi-word vocabulary entry atomic.
    pub fn tokenizer(&self) -> crate::text::WhitespaceTokenizer {
        crate::text::WhitespaceTokenizer::with_atoms(self.vocab.tokens().iter().map(String::as_str))
    }
}

/// Deterministic train/holdout split of `n` sample indices.
pub fn holdout_split(n: usize, fraction: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let mut n_holdout = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && n >= 2 {
        n_holdout = n_holdout.clamp(1, n - 1);
    } else {
        n_holdout = 0;
    }
    let holdout = idx[..n_holdout].to_vec();
    let train = idx[n_holdout..].to_vec();
    (train, holdout)
}

fn holdout_metrics(params: &ModelParams, samples: &[&EncodedSample], threshold: f64) -> Result<(f64, f64)> {
    let scored: Vec<(Vec<f64>, Vec<f64>)> = samples
        .iter()
        .map(|s| {
            let z = logits(params, &MeanEncoder.encode(params, &s.tokens));
            let p = z.iter().map(|&v| clamped_sigmoid(v)).collect();
            (z, p)
        })
        .collect();
    let report = metrics::aggregate(
        scored.iter().zip(samples).map(|((z, p), s)| metrics::ScoredSample {
            scores: z,
            probabilities: p,
            positives: &s.positives,
        }),
        &[1],
        threshold,
        "",
    )?;
    Ok((report.recall, report.p_at[&1]))
}

/// Run every stage in order from freshly initialized parameters.
pub fn train(data: &TrainData, config: &TrainConfig) -> Result<(Model, StageLog)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let params = ModelParams::random(
        data.vocab.len(),
        config.dim,
        data.labels.len(),
        config.init_scale,
        &mut rng,
    );
    train_from(params, data, config, &mut rng)
}

/// Run every stage starting from `params`, drawing splits and shuffles from `rng`.
pub fn train_from(
    mut params: ModelParams,
    data: &TrainData,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Model, StageLog)> {
    if config.stages.is_empty() {
        return Err(Error::Config("at least one training stage is required".into()));
    }
    if data.samples.is_empty() {
        return Err(Error::invalid("no training samples"));
    }
    if config.accumulation == 0 {
        return Err(Error::Config("accumulation must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&config.holdout_fraction) {
        return Err(Error::Config("holdout_fraction must lie in [0, 1)".into()));
    }
    for (i, s) in config.stages.iter().enumerate() {
        s.validate(i + 1)?;
    }
    if params.vocab_size() != data.vocab.len() || params.n_labels() != data.labels.len() {
        return Err(Error::invalid("parameter shapes do not match the data"));
    }
    let (mut train_idx, holdout_idx) =
        holdout_split(data.samples.len(), config.holdout_fraction, rng);
    let holdout: Vec<&EncodedSample> = holdout_idx.iter().map(|&i| &data.samples[i]).collect();
    if config.gate == GateMode::Recall && holdout.is_empty() {
        log::warn!("recall gate requested without a holdout split; using epoch budgets");
    }

    let encoder = MeanEncoder;
    let mut optimizer = Sgd;
    let mut log = StageLog::default();
    let mut step: u64 = 0;

    for (stage_no, stage) in config.stages.iter().enumerate().map(|(i, s)| (i + 1, s)) {
        if config.reset_schedule_per_stage {
            step = 0;
        }
        let mut trigger = Trigger::EpochBudget;
        let mut epochs_run = 0;
        for epoch in 1..=stage.epochs {
            train_idx.shuffle(rng);
            let mut loss_sum = 0.0;
            let mut pending: Option<ModelParams> = None;
            let mut pending_count = 0usize;
            let chunks: Vec<&[usize]> = train_idx.chunks(stage.batch_size).collect();
            let mut lr = 0.0;
            for (i, chunk) in chunks.iter().enumerate() {
                let batch: Vec<EncodedSample> = chunk.iter().map(|&j| data.samples[j].clone()).collect();
                let (g, l) = gradients(&params, &encoder, &batch, stage).map_err(|e| Error::NonFinite {
                    stage: stage_no,
                    epoch,
                    what: e.to_string(),
                })?;
                if !l.is_finite() {
                    return Err(Error::NonFinite {
                        stage: stage_no,
                        epoch,
                        what: format!("batch loss {l}"),
                    });
                }
                loss_sum += l * batch.len() as f64;
                match pending.as_mut() {
                    None => pending = Some(g),
                    Some(acc) => {
                        for (a, v) in acc.values_mut().zip(g.values()) {
                            *a += v;
                        }
                    }
                }
                pending_count += 1;
                if pending_count == config.accumulation || i + 1 == chunks.len() {
                    let mut acc = pending.take().expect("accumulated gradient");
                    if pending_count > 1 {
                        let m = pending_count as f64;
                        acc.values_mut().for_each(|v| *v /= m);
                    }
                    step += 1;
                    lr = config.schedule.rate(step);
                    optimizer.step(&mut params, &acc, lr);
                    pending_count = 0;
                }
            }
            if !params.is_finite() {
                return Err(Error::NonFinite {
                    stage: stage_no,
                    epoch,
                    what: "parameters".into(),
                });
            }
            epochs_run = epoch;
            let (recall, p1) = if holdout.is_empty() {
                (None, None)
            } else {
                let (r, p) = holdout_metrics(&params, &holdout, stage.threshold)?;
                (Some(r), Some(p))
            };
            log.entries.push(LogEntry::Epoch {
                stage: stage_no,
                epoch,
                step,
                lr,
                loss: loss_sum / train_idx.len() as f64,
                holdout_recall: recall,
                holdout_p_at_1: p1,
            });
            if stage_no == 1 && config.gate == GateMode::Recall {
                if let Some(r) = recall {
                    if r >= config.recall_gate {
                        trigger = Trigger::RecallGate;
                        break;
                    }
                }
            }
        }
        log.entries.push(LogEntry::Transition {
            stage: stage_no,
            epochs_run,
            trigger,
        });
    }

    Ok((
        Model {
            vocab: data.vocab.clone(),
            labels: data.labels.clone(),
            params,
            fingerprint: String::new(),
        },
        log,
    ))
}
