//! Positive-weighted binary cross-entropy and its precision-scaled variant.
//!
//! Per-sample losses are means over the label components; batch losses are
//! means over samples.

use crate::error::{Error, Result};

/// Floor applied to precision before it becomes a loss multiplier.
pub const PRECISION_FLOOR: f64 = 0.01;

fn check_shapes(predicted: &[f64], truth: &[u8]) -> Result<()> {
    if predicted.len() != truth.len() {
        return Err(Error::invalid(format!(
            "prediction has {} components, truth has {}",
            predicted.len(),
            truth.len()
        )));
    }
    if let Some((j, p)) = predicted
        .iter()
        .enumerate()
        .find(|(_, &p)| !(p > 0.0 && p < 1.0))
    {
        return Err(Error::invalid(format!(
            "prediction component {j} = {p} is outside (0, 1)"
        )));
    }
    Ok(())
}

/// `mean_j -[alpha y_j ln p_j + (1 - y_j) ln(1 - p_j)]`.
pub fn loss_stage1(predicted: &[f64], truth: &[u8], alpha: f64) -> Result<f64> {
    check_shapes(predicted, truth)?;
    if predicted.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(&p, &y)| {
            if y == 1 {
                -alpha * p.ln()
            } else {
                -(-p).ln_1p()
            }
        })
        .sum();
    Ok(sum / predicted.len() as f64)
}

/// Precision of the thresholded prediction; 0 when nothing is predicted.
pub fn sample_precision(predicted: &[f64], truth: &[u8], threshold: f64) -> f64 {
    let mut chosen = 0usize;
    let mut correct = 0usize;
    for (&p, &y) in predicted.iter().zip(truth) {
        if p >= threshold {
            chosen += 1;
            if y == 1 {
                correct += 1;
            }
        }
    }
    if chosen == 0 {
        0.0
    } else {
        correct as f64 / chosen as f64
    }
}

/// `1 / max(p, 0.01)`.
pub fn precision_coefficient(precision: f64) -> f64 {
    1.0 / precision.max(PRECISION_FLOOR)
}

/// Stage-one loss scaled by the sample's precision coefficient.
pub fn loss_stage23(predicted: &[f64], truth: &[u8], alpha: f64, threshold: f64) -> Result<f64> {
    let base = loss_stage1(predicted, truth, alpha)?;
    Ok(precision_coefficient(sample_precision(predicted, truth, threshold)) * base)
}

/// Mean over samples of either loss form.
pub fn batch_loss(
    batch: &[(&[f64], &[u8])],
    alpha: f64,
    use_precision: bool,
    threshold: f64,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    let mut total = 0.0;
    for &(p, y) in batch {
        total += if use_precision {
            loss_stage23(p, y, alpha, threshold)?
        } else {
            loss_stage1(p, y, alpha)?
        };
    }
    Ok(total / batch.len() as f64)
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample stage-one loss from logits, with its derivative per logit.
///
/// Uses `-ln sigmoid(z) = softplus(-z)` and `-ln(1 - sigmoid(z)) = softplus(z)`,
/// so saturated logits keep a finite loss and a nonzero gradient.
pub(crate) fn logit_loss_and_grad(
    logits: &[f64],
    positives: &[usize],
    alpha: f64,
    grad: &mut [f64],
) -> f64 {
    let k = logits.len() as f64;
    let mut loss = 0.0;
    for (j, &z) in logits.iter().enumerate() {
        loss += softplus(z);
        grad[j] = sigmoid(z) / k;
    }
    for &j in positives {
        let z = logits[j];
        loss += alpha * softplus(-z) - softplus(z);
        grad[j] = -alpha * sigmoid(-z) / k;
    }
    loss / k
}
