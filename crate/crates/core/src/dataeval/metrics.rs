use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{KernelConfig, MetaBatch};
use crate::losses::LossConfig;
use crate::numerics::{dot, Matrix};

/// Loss terms of a feature set against itself, without gradients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RepresentationMetrics {
    pub align: f64,
    pub global_unif: f64,
    /// `None` when every pair of meta-records is kernel-identical.
    pub cond_unif: Option<f64>,
}

struct RowTerms {
    align: f64,
    global: f64,
    /// `(max, Σ q e^{s - max})` over pairs with positive negative weight.
    cond: Option<(f64, f64)>,
}

/// Conditional alignment, global uniformity and conditional uniformity of
/// `f` (used as both views) under the kernel over `meta`.
///
/// Streams rows so memory stays `O(N)`; matches the loss functions of the
/// same names on `Batch::new(f, f, weights)`.
pub fn representation_metrics(
    f: &Matrix,
    meta: &MetaBatch,
    kernel: &KernelConfig,
    cfg: &LossConfig,
) -> Result<RepresentationMetrics> {
    cfg.validate()?;
    let n = f.rows();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if meta.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} features, {} meta records",
            meta.len()
        )));
    }
    let nf = n as f64;
    let m = kernel.sup_norm();
    let rows: Vec<RowTerms> = (0..n)
        .into_par_iter()
        .map(|i| {
            let fi = f.row(i);
            let s: Vec<f64> = (0..n).map(|j| dot(fi, f.row(j)) / cfg.tau).collect();
            let w: Vec<f64> = (0..n)
                .map(|j| kernel.eval(meta.get(i), meta.get(j)))
                .collect::<Result<_>>()?;
            let z = w.iter().sum::<f64>() / nf;
            if !(z >= cfg.epsilon) {
                return Err(Error::DegenerateWeights {
                    anchor: i,
                    z_hat: z,
                });
            }
            let align = -s.iter().zip(&w).map(|(sv, wv)| wv / z * sv).sum::<f64>() / nf;
            let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let global = max + (s.iter().map(|v| (v - max).exp()).sum::<f64>() / nf).ln();
            let denom = m - z;
            let cond = if denom >= cfg.epsilon {
                let pairs: Vec<(f64, f64)> = s
                    .iter()
                    .zip(&w)
                    .map(|(sv, wv)| ((m - wv) / denom, *sv))
                    .filter(|(q, _)| *q > 0.0)
                    .collect();
                let cmax = pairs.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                (!pairs.is_empty()).then(|| {
                    (
                        cmax,
                        pairs.iter().map(|(q, sv)| q * (sv - cmax).exp()).sum(),
                    )
                })
            } else {
                None
            };
            Ok(RowTerms {
                align,
                global,
                cond,
            })
        })
        .collect::<Result<_>>()?;

    let align = rows.iter().map(|r| r.align).sum::<f64>() / nf;
    let global_unif = rows.iter().map(|r| r.global).sum::<f64>() / nf;
    let cmax = rows
        .iter()
        .filter_map(|r| r.cond.map(|c| c.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let cond_unif = (cmax > f64::NEG_INFINITY).then(|| {
        let total: f64 = rows
            .iter()
            .filter_map(|r| r.cond.map(|(mx, sum)| sum * (mx - cmax).exp()))
            .sum();
        cmax + total.ln() - 2.0 * nf.ln()
    });
    Ok(RepresentationMetrics {
        align,
        global_unif,
        cond_unif,
    })
}

/// One row per sample: features `f0..`, `label`, then the meta-data as
/// `meta_c*` (continuous) and `meta_k*` (categorical) columns.
pub fn features_csv(f: &Matrix, labels: &[usize], meta: &MetaBatch) -> Result<String> {
    if labels.len() != f.rows() || meta.len() != f.rows() {
        return Err(Error::ShapeMismatch(
            "features, labels and meta differ in length".into(),
        ));
    }
    let (nc, nk) = meta
        .records()
        .first()
        .map_or((0, 0), |r| (r.continuous.len(), r.categorical.len()));
    let mut cols: Vec<String> = (0..f.cols()).map(|j| format!("f{j}")).collect();
    cols.push("label".into());
    cols.extend((0..nc).map(|j| format!("meta_c{j}")));
    cols.extend((0..nk).map(|j| format!("meta_k{j}")));
    let mut out = cols.join(",");
    out.push('\n');
    for (i, row) in f.row_iter().enumerate() {
        let mut fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        fields.push(labels[i].to_string());
        let rec = meta.get(i);
        fields.extend(rec.continuous.iter().map(|v| format!("{v:?}")));
        fields.extend(rec.categorical.iter().map(ToString::to_string));
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    Ok(out)
}
