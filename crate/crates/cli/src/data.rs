//! Datasets named by the `[data]` section.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use condcl::dataeval::{
    downsample_gray, load_cifar10_binary, make_synthetic_dataset_with, Dataset,
    SyntheticDataOptions,
};
use condcl::Rng;

use crate::config::DataSection;

/// Train and test splits.
pub fn load(cfg: &DataSection) -> Result<(Dataset, Dataset)> {
    match cfg.source.as_str() {
        "synthetic" => synthetic(cfg),
        "cifar10" => cifar10(cfg),
        other => bail!("unknown data source `{other}`"),
    }
}

fn synthetic(cfg: &DataSection) -> Result<(Dataset, Dataset)> {
    let mut model = SyntheticDataOptions::default_model();
    model.kappa = cfg.kappa.is_finite().then_some(cfg.kappa);
    let opts = SyntheticDataOptions {
        nuisance_dim: cfg.nuisance_dim,
        signal_scale: cfg.signal_scale,
        nuisance_std: cfg.nuisance_std,
        meta_jitter: cfg.meta_jitter,
    };
    let all = make_synthetic_dataset_with(
        &model,
        cfg.n_train + cfg.n_test,
        &opts,
        &mut Rng::new(cfg.seed),
    )?;
    let train: Vec<usize> = (0..cfg.n_train).collect();
    let test: Vec<usize> = (cfg.n_train..cfg.n_train + cfg.n_test).collect();
    Ok((all.select(&train), all.select(&test)))
}

/// Looks for the binary batches in `dir` or its `cifar-10-batches-bin`
/// subdirectory.
pub fn cifar_dir(cfg: &DataSection) -> Result<PathBuf> {
    let dir = cfg
        .dir
        .clone()
        .context("CIFAR-10 needs [data] dir or CONDCL_DATA_DIR pointing at the binary batches")?;
    for cand in [dir.join("cifar-10-batches-bin"), dir.clone()] {
        if cand.join("test_batch.bin").is_file() {
            return Ok(cand);
        }
    }
    bail!(
        "no CIFAR-10 binary batches (test_batch.bin) under {}",
        dir.display()
    )
}

fn subset(d: &Dataset, n: usize, rng: &mut Rng, what: &str) -> Result<Dataset> {
    if n > d.len() {
        bail!("requested {n} {what} samples, only {} available", d.len());
    }
    let perm = rng.permutation(d.len());
    Ok(d.select(&perm[..n]))
}

fn cifar10(cfg: &DataSection) -> Result<(Dataset, Dataset)> {
    let dir = cifar_dir(cfg)?;
    let train_files: Vec<PathBuf> = (1..=5)
        .map(|k| dir.join(format!("data_batch_{k}.bin")))
        .filter(|p| p.is_file())
        .collect();
    if train_files.is_empty() {
        bail!("no data_batch_*.bin files in {}", dir.display());
    }
    let rng = Rng::new(cfg.seed);
    let train = load_cifar10_binary(&train_files)?;
    let test = load_cifar10_binary(&[Path::new(&dir.join("test_batch.bin"))])?;
    let train = subset(&train, cfg.n_train, &mut rng.split(0), "training")?;
    let test = subset(&test, cfg.n_test, &mut rng.split(1), "test")?;
    Ok((
        downsample_gray(&train, cfg.side)?,
        downsample_gray(&test, cfg.side)?,
    ))
}
