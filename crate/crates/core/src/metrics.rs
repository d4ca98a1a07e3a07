//! Precision@k, thresholded recall and evaluation reports.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::train::model::clamped_sigmoid;
use crate::train::{EncodedSample, Model};

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    let order = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, order);
        idx.truncate(k);
    }
    idx.sort_unstable_by(order);
    idx
}

/// Fraction of the top-`k` scored labels that belong to `true_set`.
pub fn precision_at_k(scores: &[f64], true_set: &[usize], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("precision@k needs k >= 1"));
    }
    if k > scores.len() {
        return Err(Error::invalid(format!(
            "precision@{k} over only {} labels",
            scores.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::invalid("precision@k over non-finite scores"));
    }
    let hits = top_k_indices(scores, k)
        .into_iter()
        .filter(|j| true_set.contains(j))
        .count();
    Ok(hits as f64 / k as f64)
}

/// Share of positives predicted at or above `threshold`; 1 when there are no positives.
pub fn recall_at_threshold(predicted: &[f64], truth: &[u8], threshold: f64) -> f64 {
    let (hit, total) = recall_counts(predicted, truth, threshold);
    if total == 0 {
        1.0
    } else {
        hit as f64 / total as f64
    }
}

pub(crate) fn recall_counts(predicted: &[f64], truth: &[u8], threshold: f64) -> (usize, usize) {
    let mut hit = 0;
    let mut total = 0;
    for (&p, &y) in predicted.iter().zip(truth) {
        if y == 1 {
            total += 1;
            if p >= threshold {
                hit += 1;
            }
        }
    }
    (hit, total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub p_at: BTreeMap<usize, f64>,
    /// Global TP / (TP + FN).
    pub recall: f64,
    /// Mean of per-sample recall.
    pub recall_macro: f64,
    pub n_samples: usize,
    pub fingerprint: String,
}

impl EvalReport {
    /// Fixed-width table with one P@k column per requested k, in percent.
    pub fn to_table(&self) -> String {
        let mut header = String::from("| n_samples ");
        let mut row = format!("| {:>9} ", self.n_samples);
        for (k, p) in &self.p_at {
            header.push_str(&format!("| {:>6} ", format!("P@{k}")));
            row.push_str(&format!("| {:>6.2} ", p * 100.0));
        }
        header.push_str(&format!("| {:>6} |", "recall"));
        row.push_str(&format!("| {:>6.2} |", self.recall * 100.0));
        format!("{header}\n{row}\n")
    }
}

/// One scored sample: a score per label, probabilities for thresholding, and the truth.
pub struct ScoredSample<'a> {
    pub scores: &'a [f64],
    pub probabilities: &'a [f64],
    pub positives: &'a [usize],
}

/// Macro P@k and micro/macro recall over pre-scored samples.
pub fn aggregate<'a>(
    samples: impl IntoIterator<Item = ScoredSample<'a>>,
    ks: &[usize],
    threshold: f64,
    fingerprint: &str,
) -> Result<EvalReport> {
    let mut sums: BTreeMap<usize, f64> = ks.iter().map(|&k| (k, 0.0)).collect();
    let mut n = 0usize;
    let (mut hit, mut total) = (0usize, 0usize);
    let mut recall_sum = 0.0;
    for s in samples {
        for (&k, sum) in sums.iter_mut() {
            *sum += precision_at_k(s.scores, s.positives, k)?;
        }
        let h = s
            .positives
            .iter()
            .filter(|&&j| s.probabilities[j] >= threshold)
            .count();
        hit += h;
        total += s.positives.len();
        recall_sum += if s.positives.is_empty() {
            1.0
        } else {
            h as f64 / s.positives.len() as f64
        };
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("cannot evaluate an empty sample set"));
    }
    Ok(EvalReport {
        p_at: sums.into_iter().map(|(k, s)| (k, s / n as f64)).collect(),
        recall: if total == 0 { 1.0 } else { hit as f64 / total as f64 },
        recall_macro: recall_sum / n as f64,
        n_samples: n,
        fingerprint: fingerprint.to_owned(),
    })
}

/// Score every sample with `model` and aggregate. Samples are scored in
/// parallel; aggregation runs in input order.
pub fn evaluate(
    model: &Model,
    samples: &[EncodedSample],
    ks: &[usize],
    threshold: f64,
    fingerprint: &str,
) -> Result<EvalReport> {
    use rayon::prelude::*;
    let scored: Vec<(Vec<f64>, Vec<f64>)> = samples
        .par_iter()
        .map(|s| {
            let z = model.logits(&s.tokens);
            let p = z.iter().map(|&v| clamped_sigmoid(v)).collect();
            (z, p)
        })
        .collect();
    aggregate(
        scored.iter().zip(samples).map(|((z, p), s)| ScoredSample {
            scores: z,
            probabilities: p,
            positives: &s.positives,
        }),
        ks,
        threshold,
        fingerprint,
    )
}
