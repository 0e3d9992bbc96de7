//! Datasets, frozen-feature extraction, linear evaluation and
//! representation diagnostics.

mod cifar;
mod knn;
mod metrics;
mod probe;
mod synthetic;

pub use cifar::{
    downsample_gray, load_cifar10_binary, parse_cifar10, to_cifar10_bytes, CIFAR_PIXELS,
    CIFAR_RECORD, CIFAR_SIDE,
};
pub use knn::knn_accuracy;
pub use metrics::{features_csv, representation_metrics, RepresentationMetrics};
pub use probe::{linear_probe, train_softmax_regression, ProbeResult, SoftmaxModel};
pub use synthetic::{make_synthetic_dataset, make_synthetic_dataset_with, SyntheticDataOptions};

use crate::encoder::Checkpoint;
use crate::error::{Error, Result};
use crate::kernels::MetaBatch;
use crate::numerics::{Matrix, Rng};

/// Inputs in `[0, 1]`, downstream class labels, and the meta-data the
/// contrastive losses weight pairs with.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub meta: MetaBatch,
    pub num_classes: usize,
    /// Side length when each input row is a square single-channel image.
    pub image_side: Option<usize>,
}

impl Dataset {
    pub fn new(
        inputs: Matrix,
        labels: Vec<usize>,
        meta: MetaBatch,
        num_classes: usize,
        image_side: Option<usize>,
    ) -> Result<Self> {
        let n = inputs.rows();
        if labels.len() != n || meta.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} inputs, {} labels, {} meta records",
                labels.len(),
                meta.len()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::Format(format!("label {l} outside 0..{num_classes}")));
        }
        if inputs.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("inputs must lie in [0, 1]".into()));
        }
        if let Some(s) = image_side {
            if s * s != inputs.cols() {
                return Err(Error::ShapeMismatch(format!(
                    "image side {s} for {} inputs",
                    inputs.cols()
                )));
            }
        }
        Ok(Self {
            inputs,
            labels,
            meta,
            num_classes,
            image_side,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.cols()
    }

    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            meta: self.meta.select(idx),
            num_classes: self.num_classes,
            image_side: self.image_side,
        }
    }

    /// The first `n` samples (or all of them).
    pub fn head(&self, n: usize) -> Dataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.select(&idx)
    }

    /// Random disjoint split into `n_train` and `n_test` samples.
    pub fn split(
        &self,
        n_train: usize,
        n_test: usize,
        rng: &mut Rng,
    ) -> Result<(Dataset, Dataset)> {
        if n_train + n_test > self.len() {
            return Err(Error::Config(format!(
                "split of {n_train} + {n_test} from {} samples",
                self.len()
            )));
        }
        let perm = rng.permutation(self.len());
        Ok((
            self.select(&perm[..n_train]),
            self.select(&perm[n_train..n_train + n_test]),
        ))
    }
}

/// Frozen encoder features of every input; no augmentation.
pub fn extract_features(ckpt: &Checkpoint, d: &Dataset) -> Result<Matrix> {
    ckpt.model.embed(&d.inputs)
}
