//! SupCon and InfoNCE written independently of the kernel-weighted path, so
//! they can serve as equivalence oracles.
//!
//! Both use the mean-normalized denominator `(1/N) Σ_j e^{s_ij}`, which
//! shifts the usual form by the constant `-log N` and leaves gradients
//! unchanged.

use super::{backprop_scores, similarities, Batch, LossConfig, LossResult};
use crate::error::{Error, Result};
use crate::numerics::{logsumexp, Matrix};

/// Supervised contrastive loss over the cross-view contrast set.
///
/// Every candidate sharing the anchor's label is a positive; the loss is the
/// negative mean log-probability of the positives.
pub fn supcon_reference(
    anchors: &Matrix,
    candidates: &Matrix,
    labels: &[usize],
    cfg: &LossConfig,
) -> Result<LossResult> {
    let n = anchors.rows();
    if n < 2 {
        return Err(Error::Config(format!(
            "supcon needs at least two samples, got {n}"
        )));
    }
    if labels.len() != n || candidates.shape() != anchors.shape() {
        return Err(Error::ShapeMismatch(format!(
            "supcon: {} labels, anchors {:?}, candidates {:?}",
            labels.len(),
            anchors.shape(),
            candidates.shape()
        )));
    }
    cfg.validate()?;
    let tau = cfg.tau;
    let nf = n as f64;

    let mut value = 0.0;
    let mut grad_s = Matrix::zeros(n, n);
    let mut logits = vec![0.0; n];
    for i in 0..n {
        for (j, l) in logits.iter_mut().enumerate() {
            *l = anchors
                .row(i)
                .iter()
                .zip(candidates.row(j))
                .map(|(a, c)| a * c)
                .sum::<f64>()
                / tau;
        }
        let log_mean = logsumexp(&logits)? - nf.ln();
        let positives: Vec<usize> = (0..n).filter(|&k| labels[k] == labels[i]).collect();
        if positives.is_empty() {
            return Err(Error::NoPositive(i));
        }
        let p = positives.len() as f64;
        let mean_log_prob = positives.iter().map(|&k| logits[k] - log_mean).sum::<f64>() / p;
        value -= mean_log_prob;
        for j in 0..n {
            let prob = (logits[j] - log_mean).exp() / nf;
            let pos = if labels[j] == labels[i] { 1.0 / p } else { 0.0 };
            grad_s.set(i, j, (prob - pos) / nf);
        }
    }
    value /= nf;
    let (ga, gc) = backprop_scores(anchors, candidates, &grad_s, cfg)?;
    Ok(LossResult::two_view(value, ga, gc))
}

/// Two-view InfoNCE: each anchor's only positive is its own second view.
pub fn infonce_reference(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let s = similarities(b, cfg)?;
    let n = b.len();
    let nf = n as f64;
    let mut value = 0.0;
    let mut grad_s = Matrix::zeros(n, n);
    for i in 0..n {
        let log_mean = logsumexp(s.row(i))? - nf.ln();
        value += log_mean - s.get(i, i);
        for j in 0..n {
            let prob = (s.get(i, j) - log_mean).exp() / nf;
            let pos = if i == j { 1.0 } else { 0.0 };
            grad_s.set(i, j, (prob - pos) / nf);
        }
    }
    value /= nf;
    let (ga, gc) = backprop_scores(b.anchors(), b.candidates(), &grad_s, cfg)?;
    Ok(LossResult::two_view(value, ga, gc))
}
