use super::{backprop_scores, check_z_hat, similarities, Batch, LossConfig, LossResult};
use crate::error::Result;
use crate::numerics::{softmax_into, Matrix};

/// Kernel-weighted InfoNCE averaged over the anchors.
///
/// For anchor `i`:
/// `L_i = -(1/N) Σ_k (w_ik / ẑ_i) · log( e^{s_ik} / ((1/N) Σ_j e^{s_ij}) )`.
/// The anchor's own second view is candidate `k = i`.
pub fn yaware_infonce(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let w = b.weights();
    check_z_hat(w, cfg)?;
    let s = similarities(b, cfg)?;
    let n = b.len();
    let nf = n as f64;
    let log_n = nf.ln();

    let mut value = 0.0;
    let mut grad_s = Matrix::zeros(n, n);
    let mut soft = vec![0.0; n];
    for i in 0..n {
        let row = s.row(i);
        let lse = softmax_into(row, &mut soft);
        let log_denom = lse - log_n;
        let z = w.z_hat()[i];
        let mut li = 0.0;
        let mut mass = 0.0;
        for k in 0..n {
            let c = w.get(i, k) / z;
            li += c * (row[k] - log_denom);
            mass += c;
        }
        value -= li / nf;
        // dL_i/ds_ik = (1/N)(mass · softmax_ik - w_ik/ẑ_i), then averaged over i
        let g = grad_s.row_mut(i);
        for k in 0..n {
            g[k] = (mass * soft[k] - w.get(i, k) / z) / (nf * nf);
        }
    }
    value /= nf;
    let (ga, gc) = backprop_scores(b.anchors(), b.candidates(), &grad_s, cfg)?;
    Ok(LossResult::two_view(value, ga, gc))
}
