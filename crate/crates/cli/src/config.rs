//! Run configuration: a TOML file with `[kernel]`, `[loss]`, `[train]`,
//! `[data]` and `[experiment]` sections.
//!
//! Precedence is command-line flags over file keys over the `[train]`
//! preset. Unknown keys are rejected. `sigma` is required whenever a
//! `[kernel]` section names the `rbf` or `product` family; a file without a
//! `[kernel]` section gets `rbf` with `sigma = 1`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use condcl::encoder::{AugmentConfig, LrDecay, TrainConfig};
use condcl::kernels::KernelConfig;
use condcl::losses::{LossConfig, TRAINING_KINDS};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            family: "rbf".into(),
            sigma: Some(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    /// Training objective, one of the trainer's loss kinds.
    pub kind: String,
    pub tau: f64,
    pub lambda: f64,
    pub epsilon: f64,
    pub symmetrize: bool,
}

impl Default for LossSection {
    fn default() -> Self {
        let l = LossConfig::default();
        Self {
            kind: "align+cond_unif".into(),
            tau: l.tau,
            lambda: l.lambda,
            epsilon: l.epsilon,
            symmetrize: false,
        }
    }
}

/// Optimization keys; the loss, kernel and seed come from other sections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub preset: String,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: String,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<LrDecay>,
    pub augmentation: AugmentConfig,
}

impl TrainSection {
    fn from_preset(name: &str) -> Result<Self> {
        let t = TrainConfig::preset(name)?;
        Ok(Self {
            preset: name.into(),
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            optimizer: t.optimizer,
            lr_decay: t.lr_decay,
            hidden: t.hidden,
            embed_dim: t.embed_dim,
            augmentation: t.augmentation,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// `synthetic` or `cifar10`.
    pub source: String,
    /// CIFAR-10 binary directory; defaults to `$CONDCL_DATA_DIR`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub n_train: usize,
    pub n_test: usize,
    /// Seed of dataset generation and subsetting.
    pub seed: u64,
    /// Grayscale side length for CIFAR-10.
    pub side: usize,
    pub nuisance_dim: usize,
    pub kappa: f64,
    pub signal_scale: f64,
    pub nuisance_std: f64,
    pub meta_jitter: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        let o = condcl::dataeval::SyntheticDataOptions::default();
        let m = condcl::dataeval::SyntheticDataOptions::default_model();
        Self {
            source: "synthetic".into(),
            dir: None,
            n_train: 2000,
            n_test: 1000,
            seed: 0,
            side: 8,
            nuisance_dim: o.nuisance_dim,
            kappa: m.kappa.unwrap_or(f64::INFINITY),
            signal_scale: o.signal_scale,
            nuisance_std: o.nuisance_std,
            meta_jitter: o.meta_jitter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Base seed; training runs use `seed, seed + 1, ...`.
    pub seed: u64,
    pub n_seeds: usize,
    pub gradcheck_seeds: Vec<u64>,
    pub step: f64,
    pub threshold: f64,
    pub encoder_threshold: f64,
    pub decompose_batches: usize,
    /// Temperatures the decomposition check cycles through.
    pub decompose_taus: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    pub reps: usize,
    pub mc_samples: usize,
    /// `identity` or `mlp` (a random, untrained network).
    pub encoder: String,
    pub kinds: Vec<String>,
    pub lambdas: Vec<f64>,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    /// Probe every this many epochs for the accuracy-vs-epoch curve; 0 skips.
    pub curve_every: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            seed: 0,
            n_seeds: 5,
            gradcheck_seeds: vec![0, 1],
            step: condcl::gradcheck::DEFAULT_STEP,
            threshold: condcl::gradcheck::DEFAULT_THRESHOLD,
            encoder_threshold: condcl::gradcheck::ENCODER_THRESHOLD,
            decompose_batches: 100,
            decompose_taus: vec![0.05, 0.1, 1.0],
            batch_sizes: vec![64, 256, 1024, 4096],
            reps: 32,
            mc_samples: 1_000_000,
            encoder: "identity".into(),
            kinds: TRAINING_KINDS.iter().map(|k| k.to_string()).collect(),
            lambdas: vec![0.0, 0.5, 1.0, 2.0],
            probe_epochs: 500,
            probe_lr: 0.1,
            curve_every: 10,
        }
    }
}

/// Fully resolved configuration; serializing it gives the echoed file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunConfig {
    pub kernel: KernelSection,
    pub loss: LossSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub experiment: ExperimentSection,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    kernel: Option<KernelSection>,
    #[serde(default)]
    loss: LossSection,
    #[serde(default)]
    train: toml::Table,
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    experiment: ExperimentSection,
}

/// Command-line values that override file keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    /// `--data-dir`: wins over the file.
    pub data_dir: Option<PathBuf>,
    /// `CONDCL_DATA_DIR`: used only when neither the flag nor the file sets one.
    pub default_data_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path, ov: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, ov).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, ov: &Overrides) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut train_table = raw.train;
        let preset = match train_table.remove("preset") {
            Some(toml::Value::String(s)) => s,
            Some(v) => bail!("[train] preset must be a string, got {v}"),
            None => "desk".into(),
        };
        let mut merged = toml::Table::try_from(TrainSection::from_preset(&preset)?)?;
        for (k, v) in train_table {
            merged.insert(k, v);
        }
        let train: TrainSection = toml::Value::Table(merged)
            .try_into()
            .context("in [train]")?;
        let mut cfg = Self {
            kernel: raw.kernel.unwrap_or_default(),
            loss: raw.loss,
            train,
            data: raw.data,
            experiment: raw.experiment,
        };
        if let Some(seed) = ov.seed {
            cfg.experiment.seed = seed;
        }
        if ov.data_dir.is_some() {
            cfg.data.dir = ov.data_dir.clone();
        } else if cfg.data.dir.is_none() {
            cfg.data.dir = ov.default_data_dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn defaults(ov: &Overrides) -> Result<Self> {
        Self::parse("", ov)
    }

    fn validate(&self) -> Result<()> {
        self.kernel_config()?;
        self.loss_config()?;
        self.train_config(self.experiment.seed)?.validate()?;
        let e = &self.experiment;
        if e.n_seeds == 0 {
            bail!("[experiment] n_seeds must be positive");
        }
        if e.batch_sizes.windows(2).any(|w| w[0] >= w[1]) || e.batch_sizes.iter().any(|&n| n < 2) {
            bail!("[experiment] batch_sizes must be ascending and at least 2");
        }
        if e.decompose_taus.is_empty()
            || e.decompose_taus
                .iter()
                .any(|t| !(*t > 0.0 && t.is_finite()))
        {
            bail!("[experiment] decompose_taus must be non-empty and positive");
        }
        if e.reps == 0 || e.mc_samples < 1000 {
            bail!("[experiment] needs reps >= 1 and mc_samples >= 1000");
        }
        if !["identity", "mlp"].contains(&e.encoder.as_str()) {
            bail!("[experiment] encoder must be `identity` or `mlp`");
        }
        for k in &e.kinds {
            if !TRAINING_KINDS.contains(&k.as_str()) {
                bail!("[experiment] unknown loss kind `{k}`");
            }
        }
        if e.lambdas.iter().any(|l| !(*l >= 0.0)) {
            bail!("[experiment] lambdas must be non-negative");
        }
        if !(e.probe_lr > 0.0) || e.probe_epochs == 0 {
            bail!("[experiment] probe needs positive epochs and learning rate");
        }
        if !(e.threshold >= 0.0 && e.encoder_threshold >= 0.0) {
            bail!("[experiment] thresholds must be non-negative");
        }
        let d = &self.data;
        if !["synthetic", "cifar10"].contains(&d.source.as_str()) {
            bail!("[data] source must be `synthetic` or `cifar10`");
        }
        if d.n_train == 0 || d.n_test == 0 {
            bail!("[data] n_train and n_test must be positive");
        }
        if d.source == "cifar10" && (d.side == 0 || 32 % d.side != 0) {
            bail!("[data] side must divide 32");
        }
        if !(d.kappa > 0.0) {
            bail!("[data] kappa must be positive");
        }
        Ok(())
    }

    pub fn kernel_config(&self) -> Result<KernelConfig> {
        KernelConfig::new(&self.kernel.family, self.kernel.sigma).context("in [kernel]")
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let cfg = LossConfig {
            tau: self.loss.tau,
            lambda: self.loss.lambda,
            epsilon: self.loss.epsilon,
        };
        cfg.validate().context("in [loss]")?;
        Ok(cfg)
    }

    /// Trainer settings for one seed.
    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let t = &self.train;
        let cfg = TrainConfig {
            batch_size: t.batch_size,
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            weight_decay: t.weight_decay,
            optimizer: t.optimizer.clone(),
            loss_kind: self.loss.kind.clone(),
            lambda: self.loss.lambda,
            tau: self.loss.tau,
            kernel: self.kernel.family.clone(),
            sigma: self.kernel.sigma,
            seed,
            lr_decay: t.lr_decay,
            augmentation: t.augmentation,
            hidden: t.hidden.clone(),
            embed_dim: t.embed_dim,
            symmetrize: self.loss.symmetrize,
        };
        cfg.validate().context("in [train]")?;
        Ok(cfg)
    }

    /// Training seeds of multi-seed experiments.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.experiment.n_seeds as u64)
            .map(|k| self.experiment.seed + k)
            .collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_echo_round_trips() {
        let cfg = RunConfig::defaults(&Overrides::default()).unwrap();
        let again = RunConfig::parse(&cfg.to_toml(), &Overrides::default()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn precedence() {
        let text = "[train]\npreset = \"mri\"\nepochs = 7\n[experiment]\nseed = 3\n";
        let cfg = RunConfig::parse(text, &Overrides::default()).unwrap();
        assert_eq!(cfg.train.epochs, 7);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.experiment.seed, 3);
        let ov = Overrides {
            seed: Some(9),
            ..Default::default()
        };
        assert_eq!(RunConfig::parse(text, &ov).unwrap().experiment.seed, 9);

        let dir = |text: &str, flag: Option<&str>, env: Option<&str>| {
            let ov = Overrides {
                data_dir: flag.map(PathBuf::from),
                default_data_dir: env.map(PathBuf::from),
                ..Default::default()
            };
            RunConfig::parse(text, &ov).unwrap().data.dir
        };
        let file = "[data]\ndir = \"from-file\"\n";
        assert_eq!(dir(file, Some("flag"), Some("env")), Some("flag".into()));
        assert_eq!(dir(file, None, Some("env")), Some("from-file".into()));
        assert_eq!(dir("", None, Some("env")), Some("env".into()));
        assert_eq!(dir("", None, None), None);
    }

    #[test]
    fn rejects_bad_files() {
        for text in [
            "[kernel]\nfamily = \"rbf\"\n",
            "[kernel]\nfamily = \"product\"\n",
            "[loss]\ntua = 0.1\n",
            "[train]\ntau = 0.1\n",
            "[train]\npreset = \"huge\"\n",
            "[wat]\n",
            "[loss]\nkind = \"triplet\"\n",
            "[experiment]\nbatch_sizes = [256, 64]\n",
        ] {
            assert!(
                RunConfig::parse(text, &Overrides::default()).is_err(),
                "{text}"
            );
        }
        let ok = "[kernel]\nfamily = \"categorical\"\n";
        assert!(RunConfig::parse(ok, &Overrides::default()).is_ok());
    }
}
