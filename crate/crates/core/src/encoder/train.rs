use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::augment::{augment, AugmentConfig};
use super::checkpoint::Checkpoint;
use super::mlp::Mlp;
use super::optim::OptimizerRegistry;
use crate::dataeval::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{weight_matrix, KernelConfig, MetaBatch, WeightMatrix};
use crate::losses::{
    conditional_alignment, conditional_uniformity, global_uniformity, Batch, ContrastiveLoss,
    LossConfig, LossRegistry, Symmetrized, TRAINING_KINDS,
};
use crate::numerics::{Matrix, Rng};

/// Multiply the learning rate by `gamma` every `period` epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LrDecay {
    pub gamma: f64,
    pub period: usize,
}

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub optimizer: String,
    pub loss_kind: String,
    pub lambda: f64,
    pub tau: f64,
    /// Kernel family over the meta-data.
    pub kernel: String,
    pub sigma: Option<f64>,
    pub seed: u64,
    pub lr_decay: Option<LrDecay>,
    pub augmentation: AugmentConfig,
    pub hidden: Vec<usize>,
    pub embed_dim: usize,
    /// Average the loss over both view orderings.
    pub symmetrize: bool,
}

impl Default for TrainConfig {
    /// The desk-scale preset.
    fn default() -> Self {
        Self {
            batch_size: 128,
            epochs: 30,
            learning_rate: 1e-3,
            weight_decay: 0.0,
            optimizer: "adam".into(),
            loss_kind: "align+cond_unif".into(),
            lambda: 1.0,
            tau: 0.1,
            kernel: "rbf".into(),
            sigma: Some(1.0),
            seed: 0,
            lr_decay: None,
            augmentation: AugmentConfig {
                noise: 0.05,
                mask: 0.1,
                crop: 0.0,
                flip: 0.0,
            },
            hidden: vec![256, 128],
            embed_dim: 32,
            symmetrize: false,
        }
    }
}

/// Per-step training record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistoryRow {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub align_term: f64,
    pub unif_term: f64,
    pub lr: f64,
}

impl HistoryRow {
    pub const CSV_HEADER: &'static str = "step,epoch,loss,align_term,unif_term,lr";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:?},{:?},{:?},{:?}",
            self.step, self.epoch, self.loss, self.align_term, self.unif_term, self.lr
        )
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Format(format!("bad value `{v}` for `{key}`")))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |s| format!("{s:?}"))
}

impl TrainConfig {
    /// Named hyperparameter sets: `desk`, `cifar` (b=1024, d=128, lr 1e-3,
    /// wd 5e-5, Adam) and `mri` (b=64, lr 1e-4, decay 0.9 every 10 of 50
    /// epochs).
    pub fn preset(name: &str) -> Result<Self> {
        let desk = Self::default();
        match name {
            "desk" => Ok(desk),
            "cifar" => Ok(Self {
                batch_size: 1024,
                epochs: 100,
                learning_rate: 1e-3,
                weight_decay: 5e-5,
                optimizer: "adam".into(),
                kernel: "categorical".into(),
                sigma: None,
                embed_dim: 128,
                hidden: vec![512, 256],
                augmentation: AugmentConfig {
                    noise: 0.05,
                    mask: 0.1,
                    crop: 0.25,
                    flip: 0.5,
                },
                ..desk
            }),
            "mri" => Ok(Self {
                batch_size: 64,
                epochs: 50,
                learning_rate: 1e-4,
                lr_decay: Some(LrDecay {
                    gamma: 0.9,
                    period: 10,
                }),
                ..desk
            }),
            _ => Err(Error::UnknownName {
                kind: "preset",
                name: name.into(),
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.batch_size < 2 {
            return bad(format!("batch_size {} below 2", self.batch_size));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {}", self.learning_rate));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay {}", self.weight_decay));
        }
        if self.embed_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if let Some(d) = self.lr_decay {
            if !(d.gamma > 0.0 && d.gamma <= 1.0) || d.period == 0 {
                return bad(format!("lr_decay {d:?}"));
            }
        }
        if !TRAINING_KINDS.contains(&self.loss_kind.as_str()) {
            return Err(Error::UnknownName {
                kind: "loss kind",
                name: self.loss_kind.clone(),
            });
        }
        OptimizerRegistry::default().build(&self.optimizer, self.weight_decay)?;
        self.augmentation.validate()?;
        self.loss_config()?;
        KernelConfig::new(&self.kernel, self.sigma)?;
        Ok(())
    }

    pub fn loss_config(&self) -> Result<LossConfig> {
        let cfg = LossConfig {
            tau: self.tau,
            lambda: self.lambda,
            ..LossConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn kernel_config(&self) -> Result<KernelConfig> {
        KernelConfig::new(&self.kernel, self.sigma)
    }

    /// Learning rate in effect during `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_decay {
            Some(d) => self.learning_rate * d.gamma.powi((epoch / d.period) as i32),
            None => self.learning_rate,
        }
    }

    pub fn layer_dims(&self, input_dim: usize) -> Vec<usize> {
        let mut dims = vec![input_dim];
        dims.extend(&self.hidden);
        dims.push(self.embed_dim);
        dims
    }

    /// Canonical flat form; floats use the shortest round-tripping repr.
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let a = &self.augmentation;
        let pairs: [(&str, String); 19] = [
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("learning_rate", format!("{:?}", self.learning_rate)),
            ("weight_decay", format!("{:?}", self.weight_decay)),
            ("optimizer", self.optimizer.clone()),
            ("loss_kind", self.loss_kind.clone()),
            ("lambda", format!("{:?}", self.lambda)),
            ("tau", format!("{:?}", self.tau)),
            ("kernel", self.kernel.clone()),
            ("sigma", fmt_opt(self.sigma)),
            ("seed", self.seed.to_string()),
            (
                "lr_decay",
                self.lr_decay
                    .map_or_else(|| "none".into(), |d| format!("{:?},{}", d.gamma, d.period)),
            ),
            ("augmentation.noise", format!("{:?}", a.noise)),
            ("augmentation.mask", format!("{:?}", a.mask)),
            ("augmentation.crop", format!("{:?}", a.crop)),
            ("augmentation.flip", format!("{:?}", a.flip)),
            (
                "hidden",
                self.hidden
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("embed_dim", self.embed_dim.to_string()),
            ("symmetrize", self.symmetrize.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| {
            kv.get(k)
                .map(String::as_str)
                .ok_or_else(|| Error::Format(format!("missing key `{k}`")))
        };
        let f = |k: &str| -> Result<f64> { parse(k, get(k)?) };
        let expected = Self::default().to_kv();
        if let Some(k) = kv.keys().find(|k| !expected.contains_key(*k)) {
            return Err(Error::Format(format!("unknown key `{k}`")));
        }
        let sigma = match get("sigma")? {
            "none" => None,
            v => Some(parse("sigma", v)?),
        };
        let lr_decay = match get("lr_decay")? {
            "none" => None,
            v => {
                let (g, p) = v
                    .split_once(',')
                    .ok_or_else(|| Error::Format(format!("bad lr_decay `{v}`")))?;
                Some(LrDecay {
                    gamma: parse("lr_decay", g)?,
                    period: parse("lr_decay", p)?,
                })
            }
        };
        let hidden = match get("hidden")? {
            "" => Vec::new(),
            v => v
                .split(',')
                .map(|x| parse("hidden", x))
                .collect::<Result<_>>()?,
        };
        Ok(Self {
            batch_size: parse("batch_size", get("batch_size")?)?,
            epochs: parse("epochs", get("epochs")?)?,
            learning_rate: f("learning_rate")?,
            weight_decay: f("weight_decay")?,
            optimizer: get("optimizer")?.to_string(),
            loss_kind: get("loss_kind")?.to_string(),
            lambda: f("lambda")?,
            tau: f("tau")?,
            kernel: get("kernel")?.to_string(),
            sigma,
            seed: parse("seed", get("seed")?)?,
            lr_decay,
            augmentation: AugmentConfig {
                noise: f("augmentation.noise")?,
                mask: f("augmentation.mask")?,
                crop: f("augmentation.crop")?,
                flip: f("augmentation.flip")?,
            },
            hidden,
            embed_dim: parse("embed_dim", get("embed_dim")?)?,
            symmetrize: parse("symmetrize", get("symmetrize")?)?,
        })
    }
}

/// Encoder at initialization for `cfg`.
pub fn init_model(cfg: &TrainConfig, input_dim: usize) -> Result<Mlp> {
    Mlp::new(&cfg.layer_dims(input_dim), &mut Rng::new(cfg.seed).split(0))
}

/// Kernel weights over a batch's meta-data; identity positives for losses
/// that ignore them.
pub fn batch_weights(
    loss: &dyn ContrastiveLoss,
    kernel: &KernelConfig,
    meta: &MetaBatch,
) -> Result<WeightMatrix> {
    if loss.uses_weights() {
        weight_matrix(meta, kernel)
    } else {
        Ok(WeightMatrix::identity(meta.len()))
    }
}

fn build_loss(cfg: &TrainConfig) -> Result<Arc<dyn ContrastiveLoss>> {
    let base = LossRegistry::default().get(&cfg.loss_kind)?;
    Ok(if cfg.symmetrize {
        Arc::new(Symmetrized(base))
    } else {
        base
    })
}

/// Loss of `model` on two input views and its gradient with respect to every
/// model parameter, in [`Mlp::params`] order.
pub fn encoder_loss(
    model: &Mlp,
    loss: &dyn ContrastiveLoss,
    view1: &Matrix,
    view2: &Matrix,
    weights: &WeightMatrix,
    labels: Option<&[usize]>,
    cfg: &LossConfig,
) -> Result<(Batch, f64, Vec<Matrix>)> {
    let (f1, c1) = model.forward(view1)?;
    let (f2, c2) = model.forward(view2)?;
    let mut batch = Batch::new(f1, f2, weights.clone())?;
    if let Some(l) = labels {
        batch = batch.with_labels(l.to_vec())?;
    }
    let res = loss.evaluate(&batch, cfg)?;
    if !res.is_finite() {
        return Err(Error::NonFiniteLoss(res.value));
    }
    let gc = res
        .grad_candidate
        .ok_or_else(|| Error::ShapeMismatch("training loss must be two-view".into()))?;
    let mut grads = model.backward(&c1, &res.grad_anchor)?.params;
    for (g, g2) in grads.iter_mut().zip(model.backward(&c2, &gc)?.params) {
        *g = g.add_scaled(&g2, 1.0)?;
    }
    Ok((batch, res.value, grads))
}

fn diagnostic_terms(kind: &str, batch: &Batch, cfg: &LossConfig) -> Result<(f64, f64)> {
    let align = conditional_alignment(batch, cfg)?.value;
    let unif = if kind == "align+cond_unif" {
        conditional_uniformity(batch, cfg)?.value
    } else {
        global_uniformity(batch, cfg)?.value
    };
    Ok((align, unif))
}

/// Result of [`train`].
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub checkpoint: Checkpoint,
}

/// Trains from the seeded initialization. See [`train_with`].
pub fn train(cfg: &TrainConfig, data: &Dataset) -> Result<TrainOutput> {
    train_with(cfg, data, |_, _| Ok(()))
}

/// Runs `cfg.epochs` epochs over shuffled mini-batches. Each batch gets two
/// augmented views; the loss gradient through both views drives one
/// optimizer step. `after_epoch(epoch, model)` runs after every epoch.
///
/// Batches smaller than two samples are skipped. Deterministic given
/// `cfg.seed`; a failing batch aborts with [`Error::BatchFailed`].
pub fn train_with<F>(cfg: &TrainConfig, data: &Dataset, mut after_epoch: F) -> Result<TrainOutput>
where
    F: FnMut(usize, &Mlp) -> Result<()>,
{
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput);
    }
    let lcfg = cfg.loss_config()?;
    let kcfg = cfg.kernel_config()?;
    let loss = build_loss(cfg)?;
    let mut optimizer = OptimizerRegistry::default().build(&cfg.optimizer, cfg.weight_decay)?;
    let mut model = init_model(cfg, data.input_dim())?;
    let root = Rng::new(cfg.seed);
    let mut history = Vec::new();
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        let epoch_rng = root.split(1 + epoch as u64);
        let perm = epoch_rng.split(0).permutation(data.len());
        let lr = cfg.lr_at(epoch);
        for (b, idx) in perm.chunks(cfg.batch_size).enumerate() {
            if idx.len() < 2 {
                continue;
            }
            let failed = |e: Error| Error::BatchFailed {
                epoch,
                batch: b,
                source: Box::new(e),
            };
            let mut aug_rng = epoch_rng.split(1 + b as u64);
            let mut views = [Vec::new(), Vec::new()];
            for &i in idx {
                for v in views.iter_mut() {
                    v.extend(augment(
                        data.inputs.row(i),
                        &mut aug_rng,
                        &cfg.augmentation,
                        data.image_side,
                    ));
                }
            }
            let [v1, v2] = views;
            let v1 = Matrix::new(idx.len(), data.input_dim(), v1)?;
            let v2 = Matrix::new(idx.len(), data.input_dim(), v2)?;
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let weights =
                batch_weights(loss.as_ref(), &kcfg, &data.meta.select(idx)).map_err(failed)?;
            let (batch, value, grads) = encoder_loss(
                &model,
                loss.as_ref(),
                &v1,
                &v2,
                &weights,
                Some(&labels),
                &lcfg,
            )
            .map_err(failed)?;
            let (align_term, unif_term) =
                diagnostic_terms(&cfg.loss_kind, &batch, &lcfg).map_err(failed)?;
            optimizer.step(&mut model.params_mut(), &grads, lr)?;
            history.push(HistoryRow {
                step,
                epoch,
                loss: value,
                align_term,
                unif_term,
                lr,
            });
            step += 1;
        }
        after_epoch(epoch, &model)?;
    }

    Ok(TrainOutput {
        checkpoint: Checkpoint {
            model,
            config: cfg.clone(),
            epoch: cfg.epochs,
            rng: root.split(1 + cfg.epochs as u64).state(),
            history,
        },
    })
}
