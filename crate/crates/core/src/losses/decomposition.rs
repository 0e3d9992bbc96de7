use super::{backprop_scores, check_z_hat, similarities, Batch, LossConfig, LossResult};
use crate::error::Result;
use crate::numerics::{softmax_into, Matrix};

/// Attraction weighted by meta-data similarity:
/// `-(1/N) Σ_i (1/N) Σ_k (w_ik / ẑ_i) s_ik`.
pub fn conditional_alignment(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let w = b.weights();
    check_z_hat(w, cfg)?;
    let s = similarities(b, cfg)?;
    let n = b.len();
    let nf = n as f64;

    let mut value = 0.0;
    let mut grad_s = Matrix::zeros(n, n);
    for i in 0..n {
        let z = w.z_hat()[i];
        let row = s.row(i);
        let g = grad_s.row_mut(i);
        let mut li = 0.0;
        for k in 0..n {
            let c = w.get(i, k) / z;
            li += c * row[k];
            g[k] = -c / (nf * nf);
        }
        value -= li / nf;
    }
    value /= nf;
    let (ga, gc) = backprop_scores(b.anchors(), b.candidates(), &grad_s, cfg)?;
    Ok(LossResult::two_view(value, ga, gc))
}

/// Repulsion of every pair regardless of meta-data:
/// `(1/N) Σ_i log (1/N) Σ_j e^{s_ij}`.
pub fn global_uniformity(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let s = similarities(b, cfg)?;
    let n = b.len();
    let nf = n as f64;
    let log_n = nf.ln();

    let mut value = 0.0;
    let mut grad_s = Matrix::zeros(n, n);
    for i in 0..n {
        let g = grad_s.row_mut(i);
        let lse = softmax_into(s.row(i), g);
        value += lse - log_n;
        for v in g.iter_mut() {
            *v /= nf;
        }
    }
    value /= nf;
    let (ga, gc) = backprop_scores(b.anchors(), b.candidates(), &grad_s, cfg)?;
    Ok(LossResult::two_view(value, ga, gc))
}
