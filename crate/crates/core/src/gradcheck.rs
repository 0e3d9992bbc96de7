//! Central finite differences as an independent check on analytic gradients.

use std::sync::Arc;

use rayon::prelude::*;

use crate::encoder::{encoder_loss, Mlp};
use crate::error::{Error, Result};
use crate::kernels::{weight_matrix, KernelConfig, MetaBatch, WeightMatrix};
use crate::losses::{Batch, ContrastiveLoss, LossConfig, LossRegistry};
use crate::numerics::{row_normalize, Matrix, Rng};

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_THRESHOLD: f64 = 1e-6;
/// Perturbed rows may leave the sphere by this much.
pub const PERTURBED_NORM_TOL: f64 = 1e-3;

/// The loss operations swept by default.
pub const LOSS_OPS: [&str; 7] = [
    "yaware_infonce",
    "conditional_alignment",
    "global_uniformity",
    "conditional_uniformity",
    "combined_objective",
    "supcon",
    "infonce",
];

/// Batch sizes `(N, d)` of the default sweep.
pub const SWEEP_SIZES: [(usize, usize); 4] = [(2, 2), (3, 8), (8, 64), (32, 8)];

/// Outcome of one analytic-vs-numeric comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub op_name: String,
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub max_abs_err: f64,
    /// `max_abs_err` over the largest gradient magnitude of either route.
    pub max_rel_err: f64,
    /// Worst entry; rows past `n` belong to the candidate view.
    pub worst_index: (usize, usize),
    pub passed: bool,
}

impl GradReport {
    pub const CSV_HEADER: &'static str =
        "op_name,seed,n,d,max_abs_err,max_rel_err,worst_row,worst_col,passed";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:e},{:e},{},{},{}",
            self.op_name,
            self.seed,
            self.n,
            self.d,
            self.max_abs_err,
            self.max_rel_err,
            self.worst_index.0,
            self.worst_index.1,
            self.passed
        )
    }
}

/// `(L(f + h e_ij) - L(f - h e_ij)) / 2h` for every entry of `f`.
pub fn finite_diff<F>(loss_eval: F, f: &Matrix, step: f64) -> Result<Matrix>
where
    F: Fn(&Matrix) -> Result<f64> + Sync,
{
    if !(1e-8..=1e-3).contains(&step) {
        return Err(Error::Config(format!("step {step} outside [1e-8, 1e-3]")));
    }
    let (rows, cols) = f.shape();
    let grads: Vec<f64> = (0..rows * cols)
        .into_par_iter()
        .map(|k| {
            let mut plus = f.clone();
            plus.data_mut()[k] += step;
            let mut minus = f.clone();
            minus.data_mut()[k] -= step;
            let lp = loss_eval(&plus)?;
            let lm = loss_eval(&minus)?;
            if !lp.is_finite() {
                return Err(Error::NonFiniteLoss(lp));
            }
            if !lm.is_finite() {
                return Err(Error::NonFiniteLoss(lm));
            }
            Ok((lp - lm) / (2.0 * step))
        })
        .collect::<Result<_>>()?;
    Matrix::new(rows, cols, grads)
}

struct Comparison {
    max_abs: f64,
    scale: f64,
    worst: (usize, usize),
}

fn compare(analytic: &Matrix, numeric: &Matrix, row_offset: usize) -> Comparison {
    let mut c = Comparison {
        max_abs: 0.0,
        scale: 0.0,
        worst: (row_offset, 0),
    };
    for i in 0..analytic.rows() {
        for j in 0..analytic.cols() {
            let (a, n) = (analytic.get(i, j), numeric.get(i, j));
            let err = (a - n).abs();
            if err > c.max_abs {
                c.max_abs = err;
                c.worst = (i + row_offset, j);
            }
            c.scale = c.scale.max(a.abs()).max(n.abs());
        }
    }
    c
}

/// Compares a loss's analytic gradients to finite differences on one batch.
pub fn check_loss(
    loss: &dyn ContrastiveLoss,
    batch: &Batch,
    cfg: &LossConfig,
    step: f64,
    threshold: f64,
) -> Result<GradReport> {
    let analytic = loss.evaluate(batch, cfg)?;
    let rebuild = |a: &Matrix, c: &Matrix| -> Result<Batch> {
        let b = Batch::with_tolerance(
            a.clone(),
            c.clone(),
            batch.weights().clone(),
            PERTURBED_NORM_TOL,
        )?;
        match batch.labels() {
            Some(l) => b.with_labels(l.to_vec()),
            None => Ok(b),
        }
    };
    let num_a = finite_diff(
        |a| Ok(loss.evaluate(&rebuild(a, batch.candidates())?, cfg)?.value),
        batch.anchors(),
        step,
    )?;
    let mut cmp = compare(&analytic.grad_anchor, &num_a, 0);
    if let Some(gc) = &analytic.grad_candidate {
        let num_c = finite_diff(
            |c| Ok(loss.evaluate(&rebuild(batch.anchors(), c)?, cfg)?.value),
            batch.candidates(),
            step,
        )?;
        let cc = compare(gc, &num_c, batch.len());
        if cc.max_abs > cmp.max_abs {
            cmp.max_abs = cc.max_abs;
            cmp.worst = cc.worst;
        }
        cmp.scale = cmp.scale.max(cc.scale);
    }
    let max_rel_err = if cmp.scale > 0.0 {
        cmp.max_abs / cmp.scale
    } else {
        cmp.max_abs
    };
    Ok(GradReport {
        op_name: loss.name().to_string(),
        seed: 0,
        n: batch.len(),
        d: batch.dim(),
        max_abs_err: cmp.max_abs,
        max_rel_err,
        worst_index: cmp.worst,
        passed: max_rel_err < threshold,
    })
}

/// Random batch used by the sweep: unit rows, scalar meta-data in `[0, 10)`
/// with an rbf kernel of width 2, and class labels from thirds of the range.
pub fn sweep_batch(rng: &mut Rng, n: usize, d: usize) -> Result<Batch> {
    let unit = |rng: &mut Rng| row_normalize(&Matrix::from_fn(n, d, |_, _| rng.normal()));
    let a = unit(rng)?;
    let c = unit(rng)?;
    let ys: Vec<f64> = (0..n).map(|_| 10.0 * rng.uniform()).collect();
    let labels = ys
        .iter()
        .map(|y| ((y / 10.0 * 3.0) as usize).min(2))
        .collect();
    let w = weight_matrix(&MetaBatch::from_scalars(&ys)?, &KernelConfig::rbf(2.0)?)?;
    Batch::new(a, c, w)?.with_labels(labels)
}

/// One report per loss × seed × size. Failures, including evaluation errors,
/// are reported rather than returned.
pub fn check_all(
    losses: &[Arc<dyn ContrastiveLoss>],
    seeds: &[u64],
    sizes: &[(usize, usize)],
    cfg: &LossConfig,
    step: f64,
    threshold: f64,
) -> Vec<GradReport> {
    let mut cells = Vec::new();
    for loss in losses {
        for &seed in seeds {
            for (si, &(n, d)) in sizes.iter().enumerate() {
                cells.push((loss.clone(), seed, si, n, d));
            }
        }
    }
    cells
        .par_iter()
        .map(|(loss, seed, si, n, d)| {
            let mut rng = Rng::new(*seed).split(*si as u64);
            let report = sweep_batch(&mut rng, *n, *d)
                .and_then(|b| check_loss(loss.as_ref(), &b, cfg, step, threshold));
            match report {
                Ok(r) => GradReport { seed: *seed, ..r },
                Err(_) => GradReport {
                    op_name: loss.name().to_string(),
                    seed: *seed,
                    n: *n,
                    d: *d,
                    max_abs_err: f64::INFINITY,
                    max_rel_err: f64::INFINITY,
                    worst_index: (0, 0),
                    passed: false,
                },
            }
        })
        .collect()
}

/// Relative-error bound for gradients through normalization and the MLP.
pub const ENCODER_THRESHOLD: f64 = 1e-5;

/// Input width and hidden layer of the networks checked by [`check_encoder`].
pub const ENCODER_SHAPE: (usize, usize) = (6, 12);

/// Compares parameter gradients of `loss ∘ normalize ∘ mlp` on two random
/// input views against finite differences. The report's `d` is the embedding
/// dimension and `worst_index` is `(parameter, entry)`.
pub fn check_encoder(
    loss: &dyn ContrastiveLoss,
    rng: &mut Rng,
    n: usize,
    d: usize,
    cfg: &LossConfig,
    step: f64,
    threshold: f64,
) -> Result<GradReport> {
    let (d_in, hidden) = ENCODER_SHAPE;
    let model = Mlp::new(&[d_in, hidden, d], rng)?;
    let x1 = Matrix::from_fn(n, d_in, |_, _| rng.uniform());
    let x2 = Matrix::from_fn(n, d_in, |_, _| rng.uniform());
    let batch = sweep_batch(rng, n, d)?;
    let labels = batch.labels().map(<[usize]>::to_vec);
    let weights = if loss.uses_weights() {
        batch.weights().clone()
    } else {
        WeightMatrix::identity(n)
    };
    let (_, _, analytic) = encoder_loss(&model, loss, &x1, &x2, &weights, labels.as_deref(), cfg)?;
    let mut cmp = Comparison {
        max_abs: 0.0,
        scale: 0.0,
        worst: (0, 0),
    };
    for (k, g) in analytic.iter().enumerate() {
        let numeric = finite_diff(
            |p| {
                let mut m = model.clone();
                *m.params_mut()[k] = p.clone();
                Ok(encoder_loss(&m, loss, &x1, &x2, &weights, labels.as_deref(), cfg)?.1)
            },
            model.params()[k],
            step,
        )?;
        let c = compare(g, &numeric, 0);
        if c.max_abs > cmp.max_abs {
            cmp.max_abs = c.max_abs;
            cmp.worst = (k, c.worst.0 * g.cols() + c.worst.1);
        }
        cmp.scale = cmp.scale.max(c.scale);
    }
    let max_rel_err = if cmp.scale > 0.0 {
        cmp.max_abs / cmp.scale
    } else {
        cmp.max_abs
    };
    Ok(GradReport {
        op_name: format!("encoder:{}", loss.name()),
        seed: 0,
        n,
        d,
        max_abs_err: cmp.max_abs,
        max_rel_err,
        worst_index: cmp.worst,
        passed: max_rel_err < threshold,
    })
}

/// [`check_encoder`] over every loss × seed × size, like [`check_all`].
pub fn check_encoder_all(
    losses: &[Arc<dyn ContrastiveLoss>],
    seeds: &[u64],
    sizes: &[(usize, usize)],
    cfg: &LossConfig,
    step: f64,
    threshold: f64,
) -> Vec<GradReport> {
    let mut cells = Vec::new();
    for loss in losses {
        for &seed in seeds {
            for (si, &(n, d)) in sizes.iter().enumerate() {
                cells.push((loss.clone(), seed, si, n, d));
            }
        }
    }
    cells
        .par_iter()
        .map(|(loss, seed, si, n, d)| {
            let mut rng = Rng::new(*seed).split(1000 + *si as u64);
            match check_encoder(loss.as_ref(), &mut rng, *n, *d, cfg, step, threshold) {
                Ok(r) => GradReport { seed: *seed, ..r },
                Err(_) => GradReport {
                    op_name: format!("encoder:{}", loss.name()),
                    seed: *seed,
                    n: *n,
                    d: *d,
                    max_abs_err: f64::INFINITY,
                    max_rel_err: f64::INFINITY,
                    worst_index: (0, 0),
                    passed: false,
                },
            }
        })
        .collect()
}

/// Looks up [`LOSS_OPS`] in the default registry.
pub fn default_losses() -> Vec<Arc<dyn ContrastiveLoss>> {
    let reg = LossRegistry::default();
    LOSS_OPS
        .iter()
        .map(|name| reg.get(name).expect("default registry has every loss op"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_and_constant() {
        let f = Matrix::from_fn(3, 2, |_, _| 1.0);
        let g = finite_diff(|m| Ok(m.data().iter().map(|v| v * v).sum()), &f, 1e-5).unwrap();
        for v in g.data() {
            assert!((v - 2.0).abs() < 1e-8);
        }
        let z = finite_diff(|_| Ok(4.2), &f, 1e-5).unwrap();
        assert!(z.max_abs() < 1e-10);
    }

    #[test]
    fn step_bounds_and_nonfinite() {
        let f = Matrix::zeros(1, 1);
        assert!(matches!(
            finite_diff(|_| Ok(0.0), &f, 1e-2),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            finite_diff(|m| Ok(1.0 / m.get(0, 0).max(0.0)), &f, 1e-5),
            Err(Error::NonFiniteLoss(_))
        ));
    }

    #[test]
    fn zero_threshold_fails_everything() {
        let reports = check_all(
            &default_losses()[..2],
            &[1],
            &[(3, 4)],
            &LossConfig::default(),
            DEFAULT_STEP,
            0.0,
        );
        assert_eq!(reports.len(), 2);
        assert!(reports.iter().all(|r| !r.passed));
    }

    #[test]
    fn empty_sizes_give_no_reports() {
        let reports = check_all(
            &default_losses(),
            &[1, 2],
            &[],
            &LossConfig::default(),
            DEFAULT_STEP,
            1e-6,
        );
        assert!(reports.is_empty());
    }
}
