//! Monte Carlo estimates of the large-batch limit of the y-aware InfoNCE
//! loss and the experiment that checks the finite-batch loss converges to it.

use rayon::prelude::*;

use super::{sample_positive_pair, FrozenEncoder, SyntheticModel};
use crate::error::{Error, Result};
use crate::kernels::{weight_matrix, KernelConfig, MetaBatch};
use crate::losses::{yaware_infonce, Batch, LossConfig};
use crate::numerics::{dot, logsumexp, Matrix, Rng};

/// Number of batches used for batch-means standard errors.
pub const STDERR_BATCHES: usize = 32;

/// Mean with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    /// Batch-means estimate over equally sized consecutive chunks.
    fn from_batch_means(values: &[f64]) -> Self {
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let b = STDERR_BATCHES.min(values.len());
        let size = values.len() / b;
        let means: Vec<f64> = (0..b)
            .map(|k| values[k * size..(k + 1) * size].iter().sum::<f64>() / size as f64)
            .collect();
        let m = means.iter().sum::<f64>() / b as f64;
        let var = means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (b as f64 - 1.0).max(1.0);
        Self {
            mean,
            stderr: (var / b as f64).sqrt(),
        }
    }
}

/// Both limit terms:
/// `align = E_{p_pos}[f(x, x⁺)]`, `unif = E_x log E_{x'} e^{f(x, x')}`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LimitTerms {
    pub align: Estimate,
    pub unif: Estimate,
}

impl LimitTerms {
    /// The limit of the loss, `-align + unif`.
    pub fn loss_limit(&self) -> f64 {
        -self.align.mean + self.unif.mean
    }
}

fn encode_rows(enc: &FrozenEncoder, rows: Vec<Vec<f64>>) -> Result<Matrix> {
    enc.encode(&Matrix::from_rows(&rows)?)
}

/// Samples processed per parallel work unit.
const CHUNK: usize = 4096;

/// Estimates both limit terms from `n_samples` draws.
///
/// The uniformity term is a nested estimator: each chunk of outer points
/// `x` shares a fresh independent inner sample of size `ceil(sqrt(n))`.
pub fn mc_limit_terms(
    m: &SyntheticModel,
    enc: &FrozenEncoder,
    cfg: &KernelConfig,
    loss_cfg: &LossConfig,
    n_samples: usize,
    rng: &Rng,
) -> Result<LimitTerms> {
    if n_samples < 1000 {
        return Err(Error::Config(format!(
            "n_samples must be at least 1000, got {n_samples}"
        )));
    }
    m.validate()?;
    loss_cfg.validate()?;
    let inv_tau = 1.0 / loss_cfg.tau;
    let n_inner = (n_samples as f64).sqrt().ceil() as usize;
    let chunks = n_samples.div_ceil(CHUNK);
    let align_rng = rng.split(0);
    let unif_rng = rng.split(1);

    let align: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = align_rng.split(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut xs = Vec::with_capacity(len);
            let mut xp = Vec::with_capacity(len);
            for _ in 0..len {
                let p = sample_positive_pair(m, cfg, &mut r)?;
                xs.push(p.x);
                xp.push(p.x_pair);
            }
            let (a, b) = (encode_rows(enc, xs)?, encode_rows(enc, xp)?);
            Ok((0..len)
                .map(|i| dot(a.row(i), b.row(i)) * inv_tau)
                .collect())
        })
        .collect::<Result<_>>()?;

    let unif: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = unif_rng.split(c as u64);
            let len = CHUNK.min(n_samples - c * CHUNK);
            let mut draw = |k: usize| -> Result<Matrix> {
                let rows = (0..k)
                    .map(|_| {
                        let y = m.sample_label(&mut r);
                        m.sample_x(&y, &mut r)
                    })
                    .collect();
                encode_rows(enc, rows)
            };
            let outer = draw(len)?;
            let inner = draw(n_inner)?;
            let log_n = (n_inner as f64).ln();
            let mut scores = vec![0.0; n_inner];
            let mut out = Vec::with_capacity(len);
            for i in 0..len {
                for (j, s) in scores.iter_mut().enumerate() {
                    *s = dot(outer.row(i), inner.row(j)) * inv_tau;
                }
                out.push(logsumexp(&scores)? - log_n);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(LimitTerms {
        align: Estimate::from_batch_means(&align.concat()),
        unif: Estimate::from_batch_means(&unif.concat()),
    })
}

/// One finite-batch loss evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub rep: usize,
    pub loss_value: f64,
    pub limit_align: f64,
    pub limit_unif: f64,
    pub abs_gap: f64,
}

impl ConvergenceRow {
    pub const CSV_HEADER: &'static str = "N,rep,loss_value,limit_align,limit_unif,abs_gap";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.15e},{:.15e},{:.15e},{:.15e}",
            self.n, self.rep, self.loss_value, self.limit_align, self.limit_unif, self.abs_gap
        )
    }
}

/// Mean absolute gap at one batch size; `stderr` is absent with one rep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapSummary {
    pub n: usize,
    pub mean_gap: f64,
    pub stderr: Option<f64>,
}

/// Finite-batch y-aware InfoNCE on a fresh batch from the model. The second
/// view of sample `i` is another draw from `p(x | y_i)`.
pub fn batch_loss(
    m: &SyntheticModel,
    enc: &FrozenEncoder,
    cfg: &KernelConfig,
    loss_cfg: &LossConfig,
    n: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let mut ys = Vec::with_capacity(n);
    let mut v1 = Vec::with_capacity(n);
    let mut v2 = Vec::with_capacity(n);
    for _ in 0..n {
        let y = m.sample_label(rng);
        v1.push(m.sample_x(&y, rng));
        v2.push(m.sample_x(&y, rng));
        ys.push(y);
    }
    let w = weight_matrix(&MetaBatch::new(ys)?, cfg)?;
    let batch = Batch::new(encode_rows(enc, v1)?, encode_rows(enc, v2)?, w)?;
    Ok(yaware_infonce(&batch, loss_cfg)?.value)
}

/// `reps` loss evaluations at every batch size, rows ordered by
/// `(batch size, rep)`.
#[allow(clippy::too_many_arguments)]
pub fn convergence_experiment(
    m: &SyntheticModel,
    enc: &FrozenEncoder,
    cfg: &KernelConfig,
    loss_cfg: &LossConfig,
    batch_sizes: &[usize],
    reps: usize,
    limits: &LimitTerms,
    rng: &Rng,
) -> Result<Vec<ConvergenceRow>> {
    if batch_sizes.windows(2).any(|w| w[0] >= w[1]) || batch_sizes.iter().any(|&n| n < 2) {
        return Err(Error::Config(format!(
            "batch sizes must be ascending and at least 2, got {batch_sizes:?}"
        )));
    }
    if reps == 0 {
        return Err(Error::Config("reps must be positive".into()));
    }
    let limit = limits.loss_limit();
    let cells: Vec<(usize, usize, usize)> = batch_sizes
        .iter()
        .enumerate()
        .flat_map(|(k, &n)| (0..reps).map(move |rep| (k, n, rep)))
        .collect();
    cells
        .par_iter()
        .map(|&(k, n, rep)| {
            let mut r = rng.split(k as u64).split(rep as u64);
            let loss_value = batch_loss(m, enc, cfg, loss_cfg, n, &mut r)?;
            Ok(ConvergenceRow {
                n,
                rep,
                loss_value,
                limit_align: limits.align.mean,
                limit_unif: limits.unif.mean,
                abs_gap: (loss_value - limit).abs(),
            })
        })
        .collect()
}

/// Mean gap and its standard error per batch size.
pub fn summarize(rows: &[ConvergenceRow]) -> Vec<GapSummary> {
    let mut sizes: Vec<usize> = rows.iter().map(|r| r.n).collect();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let gaps: Vec<f64> = rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.abs_gap)
                .collect();
            let k = gaps.len() as f64;
            let mean = gaps.iter().sum::<f64>() / k;
            let stderr = (gaps.len() > 1).then(|| {
                let var = gaps.iter().map(|g| (g - mean) * (g - mean)).sum::<f64>() / (k - 1.0);
                (var / k).sqrt()
            });
            GapSummary {
                n,
                mean_gap: mean,
                stderr,
            }
        })
        .collect()
}

/// Least-squares slope of `log(mean gap)` against `log N`.
pub fn log_log_slope(summary: &[GapSummary]) -> f64 {
    let pts: Vec<(f64, f64)> = summary
        .iter()
        .map(|s| ((s.n as f64).ln(), s.mean_gap.ln()))
        .collect();
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}
