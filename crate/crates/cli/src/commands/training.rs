use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;

use condcl::dataeval::{
    extract_features, features_csv, linear_probe, representation_metrics, Dataset, ProbeResult,
    RepresentationMetrics,
};
use condcl::encoder::{train_with, Checkpoint, Mlp};

use crate::config::RunConfig;
use crate::rundir::RunDir;
use crate::{csv, fmt_f64, Outcome};

/// Probes frozen features of `model` with the configured probe settings.
pub fn probe_model(
    cfg: &RunConfig,
    model: &Mlp,
    train: &Dataset,
    test: &Dataset,
) -> Result<ProbeResult> {
    let a = model.embed(&train.inputs)?;
    let b = model.embed(&test.inputs)?;
    let e = &cfg.experiment;
    Ok(linear_probe(
        &a,
        &train.labels,
        &b,
        &test.labels,
        e.probe_epochs,
        e.probe_lr,
    )?)
}

fn test_metrics(cfg: &RunConfig, model: &Mlp, test: &Dataset) -> Result<RepresentationMetrics> {
    let f = model.embed(&test.inputs)?;
    Ok(representation_metrics(
        &f,
        &test.meta,
        &cfg.kernel_config()?,
        &cfg.loss_config()?,
    )?)
}

pub fn run_train(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome> {
    let (train, _) = crate::data::load(&cfg.data)?;
    let tcfg = cfg.train_config(cfg.experiment.seed)?;
    rd.log(format!(
        "train: {} samples, {} epochs of {} with {}",
        train.len(),
        tcfg.epochs,
        tcfg.loss_kind,
        tcfg.optimizer
    ));
    let out = condcl::encoder::train(&tcfg, &train)?;
    let ck = out.checkpoint;
    ck.save(&rd.staged_path("checkpoint.ccl"))?;
    rd.write("history.csv", ck.history_csv())?;
    if let (Some(first), Some(last)) = (ck.history.first(), ck.history.last()) {
        rd.log(format!(
            "loss {:.6} -> {:.6} over {} steps",
            first.loss,
            last.loss,
            ck.history.len()
        ));
    }
    Ok(Outcome::Pass)
}

pub fn probe_csv(p: &ProbeResult) -> String {
    let mut header = String::from("top1,n_train,n_test,probe_epochs");
    let mut row = format!(
        "{},{},{},{}",
        fmt_f64(p.top1_accuracy),
        p.n_train,
        p.n_test,
        p.probe_epochs
    );
    for (c, acc) in p.per_class_accuracy.iter().enumerate() {
        header.push_str(&format!(",class{c}"));
        row.push(',');
        row.push_str(&acc.map(fmt_f64).unwrap_or_default());
    }
    csv(&header, [row])
}

/// Probes a saved checkpoint, or the seeded random initialization.
pub fn run_probe(
    cfg: &RunConfig,
    rd: &mut RunDir,
    checkpoint: Option<&Path>,
    export_features: bool,
) -> Result<Outcome> {
    let (train, test) = crate::data::load(&cfg.data)?;
    let ck = match checkpoint {
        Some(p) => Checkpoint::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => Checkpoint::init(&cfg.train_config(cfg.experiment.seed)?, train.input_dim())?,
    };
    let res = probe_model(cfg, &ck.model, &train, &test)?;
    rd.write("probe.csv", probe_csv(&res))?;
    if export_features {
        let f = extract_features(&ck, &test)?;
        rd.write("features.csv", features_csv(&f, &test.labels, &test.meta)?)?;
    }
    rd.log(format!(
        "probe: top-1 {:.4} on {} test samples ({})",
        res.top1_accuracy,
        res.n_test,
        if checkpoint.is_some() {
            "checkpoint"
        } else {
            "random init"
        }
    ));
    Ok(Outcome::Pass)
}

/// Loss kinds whose objective reads `lambda`.
fn uses_lambda(kind: &str) -> bool {
    matches!(kind, "align+global_unif" | "align+cond_unif")
}

/// Pseudo loss kind of the untrained baseline.
pub const RANDOM_INIT: &str = "random_init";

/// One trained (or untrained) encoder and its evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub loss_kind: String,
    pub lambda: Option<f64>,
    pub seed: u64,
    pub top1: f64,
    pub metrics: RepresentationMetrics,
    /// `(epochs completed, top-1)` probes along training.
    pub curve: Vec<(usize, f64)>,
}

impl CompareRow {
    pub const CSV_HEADER: &'static str =
        "loss_kind,lambda,seed,top1,align_score,global_unif_score,cond_unif_score";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.loss_kind,
            self.lambda.map(fmt_f64).unwrap_or_default(),
            self.seed,
            fmt_f64(self.top1),
            fmt_f64(self.metrics.align),
            fmt_f64(self.metrics.global_unif),
            self.metrics.cond_unif.map(fmt_f64).unwrap_or_default()
        )
    }

    pub fn series(&self) -> String {
        match self.lambda {
            Some(l) => format!("{}@{}", self.loss_kind, fmt_f64(l)),
            None => self.loss_kind.clone(),
        }
    }
}

/// Median of a non-empty slice.
pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        0.5 * (s[k / 2 - 1] + s[k / 2])
    }
}

fn mean_stderr(v: &[f64]) -> (f64, Option<f64>) {
    let k = v.len() as f64;
    let m = v.iter().sum::<f64>() / k;
    if v.len() < 2 {
        return (m, None);
    }
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0);
    (m, Some((var / k).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Cell<'a> {
    kind: &'a str,
    lambda: Option<f64>,
    seed: u64,
}

fn push<'a>(cells: &mut Vec<Cell<'a>>, c: Cell<'a>) {
    if !cells.contains(&c) {
        cells.push(c);
    }
}

fn evaluate_cell(
    cfg: &RunConfig,
    cell: Cell,
    train: &Dataset,
    test: &Dataset,
) -> Result<CompareRow> {
    let mut tcfg = cfg.train_config(cell.seed)?;
    let lambda = cell.lambda.unwrap_or(cfg.loss.lambda);
    let (model, curve) = if cell.kind == RANDOM_INIT {
        (
            Checkpoint::init(&tcfg, train.input_dim())?.model,
            Vec::new(),
        )
    } else {
        tcfg.loss_kind = cell.kind.to_string();
        tcfg.lambda = lambda;
        let every = cfg.experiment.curve_every;
        let mut curve = Vec::new();
        let out = train_with(&tcfg, train, |epoch, m| {
            if every > 0 && (epoch + 1) % every == 0 {
                curve.push((
                    epoch + 1,
                    probe_model(cfg, m, train, test)
                        .map_err(to_core)?
                        .top1_accuracy,
                ));
            }
            Ok(())
        })
        .with_context(|| format!("training {} (seed {})", cell.kind, cell.seed))?;
        (out.checkpoint.model, curve)
    };
    let top1 = probe_model(cfg, &model, train, test)?.top1_accuracy;
    let mut curve = curve;
    if curve.is_empty() {
        curve.push((tcfg.epochs, top1));
    }
    if cell.kind == RANDOM_INIT {
        curve = vec![(0, top1)];
    }
    Ok(CompareRow {
        loss_kind: cell.kind.to_string(),
        lambda: cell.lambda,
        seed: cell.seed,
        top1,
        metrics: test_metrics(cfg, &model, test)?,
        curve,
    })
}

fn to_core(e: anyhow::Error) -> condcl::Error {
    match e.downcast::<condcl::Error>() {
        Ok(c) => c,
        Err(e) => condcl::Error::Config(e.to_string()),
    }
}

/// Trains every configured loss kind on every seed, sweeps `lambda` for the
/// conditional objective, and probes each encoder plus a random-init
/// baseline. Rows come back in a fixed order.
pub fn compare(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<Vec<CompareRow>> {
    let seeds = cfg.seeds();
    let mut cells: Vec<Cell> = Vec::new();
    for &seed in &seeds {
        push(
            &mut cells,
            Cell {
                kind: RANDOM_INIT,
                lambda: None,
                seed,
            },
        );
    }
    for kind in &cfg.experiment.kinds {
        let lambda = uses_lambda(kind).then_some(cfg.loss.lambda);
        for &seed in &seeds {
            push(&mut cells, Cell { kind, lambda, seed });
        }
    }
    for &lambda in &cfg.experiment.lambdas {
        for &seed in &seeds {
            push(
                &mut cells,
                Cell {
                    kind: "align+cond_unif",
                    lambda: Some(lambda),
                    seed,
                },
            );
        }
    }
    cells
        .par_iter()
        .map(|&c| evaluate_cell(cfg, c, train, test))
        .collect()
}

/// Per-(kind, lambda) medians.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareSummary {
    pub loss_kind: String,
    pub lambda: Option<f64>,
    pub n_seeds: usize,
    pub median_top1: f64,
    pub mean_top1: f64,
    pub stderr_top1: Option<f64>,
}

pub fn summarize(rows: &[CompareRow]) -> Vec<CompareSummary> {
    let mut order: Vec<(String, Option<f64>)> = Vec::new();
    for r in rows {
        let key = (r.loss_kind.clone(), r.lambda);
        if !order.contains(&key) {
            order.push(key);
        }
    }
    order
        .into_iter()
        .map(|(kind, lambda)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.loss_kind == kind && r.lambda == lambda)
                .map(|r| r.top1)
                .collect();
            let (mean, se) = mean_stderr(&acc);
            CompareSummary {
                loss_kind: kind,
                lambda,
                n_seeds: acc.len(),
                median_top1: median(&acc),
                mean_top1: mean,
                stderr_top1: se,
            }
        })
        .collect()
}

pub fn find<'a>(
    s: &'a [CompareSummary],
    kind: &str,
    lambda: Option<f64>,
) -> Option<&'a CompareSummary> {
    s.iter().find(|x| x.loss_kind == kind && x.lambda == lambda)
}

fn plot_rows(
    points: BTreeMap<(String, u64), Vec<f64>>,
    x_of: impl Fn(u64) -> String,
) -> Vec<String> {
    points
        .into_iter()
        .map(|((series, x), ys)| {
            let (m, se) = mean_stderr(&ys);
            format!(
                "{series},{},{},{}",
                x_of(x),
                fmt_f64(m),
                se.map(fmt_f64).unwrap_or_default()
            )
        })
        .collect()
}

pub fn run_compare(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome> {
    let (train, test) = crate::data::load(&cfg.data)?;
    rd.log(format!(
        "compare: {} train / {} test samples, {} seeds",
        train.len(),
        test.len(),
        cfg.experiment.n_seeds
    ));
    let rows = compare(cfg, &train, &test)?;
    rd.write(
        "compare.csv",
        csv(CompareRow::CSV_HEADER, rows.iter().map(CompareRow::csv_row)),
    )?;

    let summary = summarize(&rows);
    rd.write(
        "compare_summary.csv",
        csv(
            "loss_kind,lambda,n_seeds,median_top1,mean_top1,stderr_top1",
            summary.iter().map(|s| {
                format!(
                    "{},{},{},{},{},{}",
                    s.loss_kind,
                    s.lambda.map(fmt_f64).unwrap_or_default(),
                    s.n_seeds,
                    fmt_f64(s.median_top1),
                    fmt_f64(s.mean_top1),
                    s.stderr_top1.map(fmt_f64).unwrap_or_default()
                )
            }),
        ),
    )?;

    let mut by_epoch: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in &rows {
        for &(epoch, acc) in &r.curve {
            by_epoch
                .entry((r.series(), epoch as u64))
                .or_default()
                .push(acc);
        }
    }
    rd.write(
        "plot_accuracy_vs_epoch.csv",
        csv("series,x,y,stderr", plot_rows(by_epoch, |x| x.to_string())),
    )?;

    let mut by_lambda: BTreeMap<(String, u64), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.loss_kind == "align+cond_unif") {
        if let Some(l) = r.lambda {
            by_lambda
                .entry((r.loss_kind.clone(), l.to_bits()))
                .or_default()
                .push(r.top1);
        }
    }
    rd.write(
        "plot_accuracy_vs_lambda.csv",
        csv(
            "series,x,y,stderr",
            plot_rows(by_lambda, |x| fmt_f64(f64::from_bits(x))),
        ),
    )?;

    for s in &summary {
        rd.log(format!(
            "{:<20} lambda {:<5} median top-1 {:.4}",
            s.loss_kind,
            s.lambda.map(fmt_f64).unwrap_or_else(|| "-".into()),
            s.median_top1
        ));
    }
    Ok(Outcome::Pass)
}
