use super::{backprop_scores, conditional_alignment, similarities, Batch, LossConfig, LossResult};
use crate::error::{Error, Result};
use crate::kernels::WeightMatrix;
use crate::numerics::Matrix;

/// Negative-pair weights `q_ij = (M - w_ij) / (M - ẑ_i)`.
///
/// An anchor whose `M - ẑ_i` falls under the floor is kernel-identical to the
/// whole batch and gets an all-zero row; if that holds for every anchor the
/// negative distribution is undefined and [`Error::AllSimilar`] is returned.
pub fn negative_weights(w: &WeightMatrix, epsilon: f64) -> Result<Matrix> {
    let n = w.len();
    let m = w.sup_norm();
    let mut q = Matrix::zeros(n, n);
    let mut any = false;
    for i in 0..n {
        let denom = m - w.z_hat()[i];
        if !(denom >= epsilon) {
            continue;
        }
        any = true;
        let row = q.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            *v = (m - w.get(i, j)) / denom;
        }
    }
    if !any {
        return Err(Error::AllSimilar);
    }
    Ok(q)
}

/// Conditional uniformity estimator
/// `log (1/N²) Σ_{i,j} q_ij e^{s_ij}` with `q` from [`negative_weights`].
///
/// Pairs with `w_ij = M` carry zero weight, which includes the diagonal for
/// kernels with `w(y, y) = M`.
pub fn conditional_uniformity(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let q = negative_weights(b.weights(), cfg.epsilon)?;
    let s = similarities(b, cfg)?;
    let n = b.len();

    let mut max = f64::NEG_INFINITY;
    for (&qv, &sv) in q.data().iter().zip(s.data()) {
        if qv > 0.0 {
            max = max.max(sv);
        }
    }
    if max == f64::NEG_INFINITY {
        return Err(Error::AllSimilar);
    }
    let mut grad_s = Matrix::zeros(n, n);
    let mut total = 0.0;
    for ((g, &qv), &sv) in grad_s.data_mut().iter_mut().zip(q.data()).zip(s.data()) {
        if qv > 0.0 {
            *g = qv * (sv - max).exp();
            total += *g;
        }
    }
    for g in grad_s.data_mut() {
        *g /= total;
    }
    let value = max + total.ln() - 2.0 * (n as f64).ln();
    let (ga, gc) = backprop_scores(b.anchors(), b.candidates(), &grad_s, cfg)?;
    Ok(LossResult::two_view(value, ga, gc))
}

/// `conditional_alignment + lambda · conditional_uniformity`.
///
/// With `lambda = 0` the uniformity term is not evaluated.
pub fn combined_objective(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let align = conditional_alignment(b, cfg)?;
    if cfg.lambda == 0.0 {
        return Ok(align);
    }
    let unif = conditional_uniformity(b, cfg)?;
    align.add_scaled(&unif, cfg.lambda)
}
