//! Token vocabulary, parameters, encoder and the extreme classification head.

use std::collections::HashMap;

use rand::Rng;

use super::loss::sigmoid;
use crate::text::Tokenizer;

/// Logits are clamped to this magnitude before the logistic.
pub const LOGIT_CLAMP: f64 = 30.0;

pub const UNK: &str = "[UNK]";

/// Token strings to embedding rows; row 0 is reserved for unknown tokens.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Self::from_tokens(std::iter::empty::<String>())
    }
}

impl Vocab {
    /// Build from tokens in first-seen order, after the `[UNK]` row.
    pub fn from_tokens<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut vocab = Self {
            tokens: vec![UNK.to_owned()],
            ids: HashMap::from([(UNK.to_owned(), 0)]),
        };
        for t in tokens {
            vocab.insert(t.into());
        }
        vocab
    }

    pub fn insert(&mut self, token: String) -> usize {
        if let Some(&id) = self.ids.get(&token) {
            return id;
        }
        let id = self.tokens.len();
        self.ids.insert(token.clone(), id);
        self.tokens.push(token);
        id
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, text: &str, tokenizer: &dyn Tokenizer) -> Vec<usize> {
        tokenizer
            .tokenize(text)
            .iter()
            .map(|t| self.id(t))
            .collect()
    }
}

/// Token embeddings (`vocab x dim`), classifier weights (`k x dim`) and bias (`k`), row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub dim: usize,
    pub token_embeddings: Vec<f64>,
    pub classifier_weights: Vec<f64>,
    pub classifier_bias: Vec<f64>,
}

impl ModelParams {
    pub fn zeros(vocab_size: usize, dim: usize, n_labels: usize) -> Self {
        Self {
            dim,
            token_embeddings: vec![0.0; vocab_size * dim],
            classifier_weights: vec![0.0; n_labels * dim],
            classifier_bias: vec![0.0; n_labels],
        }
    }

    /// Uniform in `[-scale, scale)` for both matrices, zero bias.
    pub fn random(vocab_size: usize, dim: usize, n_labels: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(vocab_size, dim, n_labels);
        for v in p.token_embeddings.iter_mut().chain(p.classifier_weights.iter_mut()) {
            *v = rng.gen_range(-scale..scale);
        }
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size(), self.dim, self.n_labels())
    }

    pub fn vocab_size(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.token_embeddings.len() / self.dim
        }
    }

    pub fn n_labels(&self) -> usize {
        self.classifier_bias.len()
    }

    pub fn embedding(&self, row: usize) -> &[f64] {
        &self.token_embeddings[row * self.dim..(row + 1) * self.dim]
    }

    pub fn weight_row(&self, label: usize) -> &[f64] {
        &self.classifier_weights[label * self.dim..(label + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    /// All parameters in a fixed order: embeddings, weights, bias.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.token_embeddings
            .iter()
            .chain(&self.classifier_weights)
            .chain(&self.classifier_bias)
            .copied()
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.token_embeddings
            .iter_mut()
            .chain(self.classifier_weights.iter_mut())
            .chain(self.classifier_bias.iter_mut())
    }

    pub fn n_values(&self) -> usize {
        self.token_embeddings.len() + self.classifier_weights.len() + self.classifier_bias.len()
    }
}

/// Maps a token sequence to one feature vector of width `params.dim`.
pub trait Encoder: Send + Sync {
    fn encode(&self, params: &ModelParams, tokens: &[usize]) -> Vec<f64>;

    /// Accumulate into `grads` the embedding gradient given `d loss / d output`.
    fn backward(&self, params: &ModelParams, tokens: &[usize], upstream: &[f64], grads: &mut ModelParams);
}

/// Mean of token embedding rows; the empty sequence encodes to zeros.
#[derive(Clone, Copy, Debug, Default)]
pub struct MeanEncoder;

impl Encoder for MeanEncoder {
    fn encode(&self, params: &ModelParams, tokens: &[usize]) -> Vec<f64> {
        let mut out = vec![0.0; params.dim];
        if tokens.is_empty() {
            return out;
        }
        for &t in tokens {
            for (o, e) in out.iter_mut().zip(params.embedding(t)) {
                *o += e;
            }
        }
        let n = tokens.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    fn backward(&self, params: &ModelParams, tokens: &[usize], upstream: &[f64], grads: &mut ModelParams) {
        if tokens.is_empty() {
            return;
        }
        let n = tokens.len() as f64;
        let dim = params.dim;
        for &t in tokens {
            let row = &mut grads.token_embeddings[t * dim..(t + 1) * dim];
            for (g, u) in row.iter_mut().zip(upstream) {
                *g += u / n;
            }
        }
    }
}

/// `W h + b` for an encoded feature vector.
pub fn logits(params: &ModelParams, features: &[f64]) -> Vec<f64> {
    (0..params.n_labels())
        .map(|j| {
            let w = params.weight_row(j);
            w.iter().zip(features).map(|(a, b)| a * b).sum::<f64>() + params.classifier_bias[j]
        })
        .collect()
}

pub fn clamped_sigmoid(z: f64) -> f64 {
    sigmoid(z.clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
}

/// Per-label probabilities `sigmoid(clamp(w_j . encode(tokens) + b_j))`.
pub fn predict(params: &ModelParams, encoder: &dyn Encoder, tokens: &[usize]) -> Vec<f64> {
    let features = encoder.encode(params, tokens);
    logits(params, &features)
        .into_iter()
        .map(clamped_sigmoid)
        .collect()
}
