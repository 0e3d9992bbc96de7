use anyhow::Result;

use condcl::gradcheck::{check_all, check_encoder_all, default_losses, GradReport, SWEEP_SIZES};
use condcl::kernels::{weight_matrix, MetaBatch, MetaRecord};
use condcl::losses::{conditional_alignment, global_uniformity, yaware_infonce, Batch};
use condcl::numerics::row_normalize;
use condcl::synthlab::{
    convergence_experiment, log_log_slope, mc_limit_terms, summarize, ConvergenceRow,
    FrozenEncoder, GapSummary, LimitTerms, SyntheticModel,
};
use condcl::{Matrix, Rng};

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{csv, fmt_f64, Outcome};

/// Loss-op and end-to-end encoder gradient reports.
pub fn gradcheck(cfg: &RunConfig) -> Result<Vec<GradReport>> {
    let e = &cfg.experiment;
    let lcfg = cfg.loss_config()?;
    let losses = default_losses();
    let mut reports = check_all(
        &losses,
        &e.gradcheck_seeds,
        &SWEEP_SIZES,
        &lcfg,
        e.step,
        e.threshold,
    );
    reports.extend(check_encoder_all(
        &losses,
        &e.gradcheck_seeds,
        &SWEEP_SIZES,
        &lcfg,
        e.step,
        e.encoder_threshold,
    ));
    Ok(reports)
}

pub fn run_gradcheck(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome> {
    let reports = gradcheck(cfg)?;
    rd.write(
        "gradcheck.csv",
        csv(
            GradReport::CSV_HEADER,
            reports.iter().map(GradReport::csv_row),
        ),
    )?;
    let failed = reports.iter().filter(|r| !r.passed).count();
    let worst = reports.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    rd.log(format!(
        "gradcheck: {} checks, {failed} failed, worst relative error {worst:e}",
        reports.len()
    ));
    Ok(Outcome::from_bool(failed == 0))
}

/// Identity gap tolerances.
pub const DECOMPOSE_VALUE_TOL: f64 = 1e-12;
pub const DECOMPOSE_GRAD_TOL: f64 = 1e-10;

const DECOMPOSE_N: [usize; 5] = [1, 2, 8, 64, 256];
const DECOMPOSE_D: [usize; 3] = [2, 16, 64];

#[derive(Clone, Debug, PartialEq)]
pub struct DecomposeRow {
    pub seed: u64,
    pub n: usize,
    pub d: usize,
    pub tau: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub abs_gap: f64,
    pub grad_gap: f64,
}

impl DecomposeRow {
    pub const CSV_HEADER: &'static str = "seed,N,d,tau,lhs,rhs,abs_gap,grad_gap";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.seed,
            self.n,
            self.d,
            fmt_f64(self.tau),
            fmt_f64(self.lhs),
            fmt_f64(self.rhs),
            fmt_f64(self.abs_gap),
            fmt_f64(self.grad_gap)
        )
    }
}

/// y-aware InfoNCE against conditional alignment plus global uniformity on
/// `decompose_batches` random batches cycling through N, then d, then the
/// configured temperatures.
pub fn decompose(cfg: &RunConfig) -> Result<Vec<DecomposeRow>> {
    let kernel = cfg.kernel_config()?;
    let base = cfg.loss_config()?;
    let root = Rng::new(cfg.experiment.seed);
    (0..cfg.experiment.decompose_batches)
        .map(|r| {
            let n = DECOMPOSE_N[r % 5];
            let d = DECOMPOSE_D[(r / 5) % 3];
            let taus = &cfg.experiment.decompose_taus;
            let tau = taus[(r / 15) % taus.len()];
            let mut rng = root.split(r as u64);
            let a = row_normalize(&Matrix::from_fn(n, d, |_, _| rng.normal()))?;
            let c = row_normalize(&Matrix::from_fn(n, d, |_, _| rng.normal()))?;
            let records = (0..n)
                .map(|_| {
                    let y = 10.0 * rng.uniform();
                    MetaRecord::new(vec![y], vec![(y / 10.0 * 3.0) as u32])
                })
                .collect();
            let w = weight_matrix(&MetaBatch::new(records)?, &kernel)?;
            let b = Batch::new(a, c, w)?;
            let lcfg = condcl::losses::LossConfig { tau, ..base };
            let lhs = yaware_infonce(&b, &lcfg)?;
            let rhs = conditional_alignment(&b, &lcfg)?
                .add_scaled(&global_uniformity(&b, &lcfg)?, 1.0)?;
            let grad_gap = lhs.grad_anchor.max_abs_diff(&rhs.grad_anchor)?.max(
                lhs.grad_candidate
                    .as_ref()
                    .zip(rhs.grad_candidate.as_ref())
                    .map_or(Ok(0.0), |(x, y)| x.max_abs_diff(y))?,
            );
            Ok(DecomposeRow {
                seed: cfg.experiment.seed,
                n,
                d,
                tau,
                lhs: lhs.value,
                rhs: rhs.value,
                abs_gap: (lhs.value - rhs.value).abs(),
                grad_gap,
            })
        })
        .collect()
}

pub fn run_decompose(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome> {
    let rows = decompose(cfg)?;
    rd.write(
        "decompose.csv",
        csv(
            DecomposeRow::CSV_HEADER,
            rows.iter().map(DecomposeRow::csv_row),
        ),
    )?;
    let gap = rows.iter().map(|r| r.abs_gap).fold(0.0, f64::max);
    let grad = rows.iter().map(|r| r.grad_gap).fold(0.0, f64::max);
    rd.log(format!(
        "decompose: {} batches, max value gap {gap:e}, max gradient gap {grad:e}",
        rows.len()
    ));
    Ok(Outcome::from_bool(
        gap < DECOMPOSE_VALUE_TOL && grad < DECOMPOSE_GRAD_TOL,
    ))
}

/// Accepted range of the log-log slope of gap against N.
pub const SLOPE_WINDOW: (f64, f64) = (-0.7, -0.3);

pub struct ConvergeResult {
    pub limits: LimitTerms,
    pub rows: Vec<ConvergenceRow>,
    pub summary: Vec<GapSummary>,
    pub slope: f64,
}

impl ConvergeResult {
    pub fn strictly_decreasing(&self) -> bool {
        self.summary
            .windows(2)
            .all(|w| w[1].mean_gap < w[0].mean_gap)
    }

    pub fn passed(&self) -> bool {
        let slope_ok =
            self.summary.len() < 2 || (SLOPE_WINDOW.0..=SLOPE_WINDOW.1).contains(&self.slope);
        self.strictly_decreasing() && slope_ok
    }
}

/// Default synthetic model, frozen encoder, limit terms from `mc_samples`
/// draws, then `reps` finite batches at every size.
pub fn converge(cfg: &RunConfig) -> Result<ConvergeResult> {
    let e = &cfg.experiment;
    let model = SyntheticModel::default();
    let root = Rng::new(e.seed);
    let enc = match e.encoder.as_str() {
        "mlp" => FrozenEncoder::random_mlp(&[model.dim, 32, model.dim], &mut root.split(0))?,
        _ => FrozenEncoder::Identity,
    };
    let kernel = cfg.kernel_config()?;
    let lcfg = cfg.loss_config()?;
    let limits = mc_limit_terms(&model, &enc, &kernel, &lcfg, e.mc_samples, &root.split(1))?;
    let rows = convergence_experiment(
        &model,
        &enc,
        &kernel,
        &lcfg,
        &e.batch_sizes,
        e.reps,
        &limits,
        &root.split(2),
    )?;
    let summary = summarize(&rows);
    let slope = if summary.len() >= 2 {
        log_log_slope(&summary)
    } else {
        f64::NAN
    };
    Ok(ConvergeResult {
        limits,
        rows,
        summary,
        slope,
    })
}

pub fn run_converge(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome> {
    let res = converge(cfg)?;
    rd.write(
        "converge.csv",
        csv(
            ConvergenceRow::CSV_HEADER,
            res.rows.iter().map(ConvergenceRow::csv_row),
        ),
    )?;
    rd.write(
        "converge_summary.csv",
        csv(
            "N,mean_gap,stderr",
            res.summary.iter().map(|s| {
                format!(
                    "{},{},{}",
                    s.n,
                    fmt_f64(s.mean_gap),
                    s.stderr.map(fmt_f64).unwrap_or_default()
                )
            }),
        ),
    )?;
    let l = &res.limits;
    rd.write(
        "limits.csv",
        csv(
            "term,mean,stderr",
            [
                format!(
                    "align,{},{}",
                    fmt_f64(l.align.mean),
                    fmt_f64(l.align.stderr)
                ),
                format!("unif,{},{}", fmt_f64(l.unif.mean), fmt_f64(l.unif.stderr)),
                format!("loss,{},", fmt_f64(l.loss_limit())),
            ],
        ),
    )?;
    for s in &res.summary {
        rd.log(format!("N = {}: mean gap {:.3e}", s.n, s.mean_gap));
    }
    rd.log(format!(
        "converge: limit {:.6} (align {:.6} ± {:.1e}, unif {:.6} ± {:.1e}), slope {:.3}, strictly decreasing: {}",
        l.loss_limit(),
        l.align.mean,
        l.align.stderr,
        l.unif.mean,
        l.unif.stderr,
        res.slope,
        res.strictly_decreasing()
    ));
    Ok(Outcome::from_bool(res.passed()))
}
