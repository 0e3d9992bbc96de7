//! Contrastive losses with closed-form gradients.
//!
//! Batches follow the two-view convention: `anchors[i]` and `candidates[i]`
//! are two augmentations of sample `i`, and every pairwise score is
//! `s_ij = <anchors[i], candidates[j]> / tau`. Each loss returns its value and
//! the gradient with respect to both views.

mod baselines;
mod conditional;
mod decomposition;
mod registry;
mod yaware;

pub use baselines::{infonce_reference, supcon_reference};
pub use conditional::{combined_objective, conditional_uniformity, negative_weights};
pub use decomposition::{conditional_alignment, global_uniformity};
pub use registry::{ContrastiveLoss, FnLoss, LossRegistry, Symmetrized, TRAINING_KINDS};
pub use yaware::yaware_infonce;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::WeightMatrix;
use crate::numerics::{l2_norm, pairwise_dot, Matrix};

/// Unit-norm tolerance for batch rows.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Temperature dividing every dot product.
    pub tau: f64,
    /// Weight of the uniformity term in the combined objectives.
    pub lambda: f64,
    /// Floor on the `z_hat` and `M - z_hat` denominators.
    pub epsilon: f64,
}

impl Default for LossConfig {
    /// `tau = 0.1` is a conventional choice, not a published value.
    fn default() -> Self {
        Self {
            tau: 0.1,
            lambda: 1.0,
            epsilon: 1e-12,
        }
    }
}

impl LossConfig {
    pub fn new(tau: f64, lambda: f64) -> Result<Self> {
        let cfg = Self {
            tau,
            lambda,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1e-6) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1e-6], got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Scalar loss and its gradients.
#[derive(Clone, Debug)]
pub struct LossResult {
    pub value: f64,
    pub grad_anchor: Matrix,
    /// Absent for losses of a single feature matrix.
    pub grad_candidate: Option<Matrix>,
}

impl LossResult {
    pub(crate) fn two_view(value: f64, grad_anchor: Matrix, grad_candidate: Matrix) -> Self {
        Self {
            value,
            grad_anchor,
            grad_candidate: Some(grad_candidate),
        }
    }

    /// `self + s·other`, term by term.
    pub fn add_scaled(&self, other: &LossResult, s: f64) -> Result<LossResult> {
        let grad_candidate = match (&self.grad_candidate, &other.grad_candidate) {
            (Some(a), Some(b)) => Some(a.add_scaled(b, s)?),
            (None, None) => None,
            _ => {
                return Err(Error::ShapeMismatch(
                    "adding a single-view result to a two-view one".into(),
                ))
            }
        };
        Ok(LossResult {
            value: self.value + s * other.value,
            grad_anchor: self.grad_anchor.add_scaled(&other.grad_anchor, s)?,
            grad_candidate,
        })
    }

    /// Collapses both view gradients onto one feature matrix, for losses
    /// evaluated with `anchors == candidates`.
    pub fn merge_views(self) -> Result<LossResult> {
        let grad_anchor = match &self.grad_candidate {
            Some(c) => self.grad_anchor.add_scaled(c, 1.0)?,
            None => self.grad_anchor,
        };
        Ok(LossResult {
            value: self.value,
            grad_anchor,
            grad_candidate: None,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite()
            && self.grad_anchor.is_finite()
            && self.grad_candidate.as_ref().is_none_or(Matrix::is_finite)
    }
}

/// Two views of `N` samples plus the kernel weights over their meta-data.
#[derive(Clone, Debug)]
pub struct Batch {
    anchors: Matrix,
    candidates: Matrix,
    weights: WeightMatrix,
    labels: Option<Vec<usize>>,
}

impl Batch {
    pub fn new(anchors: Matrix, candidates: Matrix, weights: WeightMatrix) -> Result<Self> {
        Self::with_tolerance(anchors, candidates, weights, UNIT_NORM_TOL)
    }

    /// Like [`Batch::new`] with a custom unit-norm tolerance. Finite-difference
    /// probes push rows slightly off the sphere.
    pub fn with_tolerance(
        anchors: Matrix,
        candidates: Matrix,
        weights: WeightMatrix,
        tol: f64,
    ) -> Result<Self> {
        let n = anchors.rows();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        if candidates.shape() != anchors.shape() {
            return Err(Error::ShapeMismatch(format!(
                "anchors {:?} vs candidates {:?}",
                anchors.shape(),
                candidates.shape()
            )));
        }
        if weights.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} samples but {}x{} weights",
                weights.len(),
                weights.len()
            )));
        }
        for (name, m) in [("anchor", &anchors), ("candidate", &candidates)] {
            for (i, row) in m.row_iter().enumerate() {
                let norm = l2_norm(row);
                if (norm - 1.0).abs() > tol {
                    return Err(Error::Config(format!(
                        "{name} row {i} has norm {norm}, expected unit norm"
                    )));
                }
            }
        }
        Ok(Self {
            anchors,
            candidates,
            weights,
            labels: None,
        })
    }

    /// Attaches integer class labels, used by the SupCon baseline.
    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} samples",
                labels.len(),
                self.len()
            )));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.anchors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.anchors.cols()
    }

    pub fn anchors(&self) -> &Matrix {
        &self.anchors
    }

    pub fn candidates(&self) -> &Matrix {
        &self.candidates
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.weights
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// The same batch with the roles of the two views exchanged.
    pub fn swapped(&self) -> Batch {
        Batch {
            anchors: self.candidates.clone(),
            candidates: self.anchors.clone(),
            weights: self.weights.clone(),
            labels: self.labels.clone(),
        }
    }
}

/// Scaled similarity matrix `s_ij = <a_i, c_j> / tau`.
pub(crate) fn similarities(b: &Batch, cfg: &LossConfig) -> Result<Matrix> {
    cfg.validate()?;
    Ok(pairwise_dot(&b.anchors, &b.candidates)?.scale(1.0 / cfg.tau))
}

/// Back-propagates `dL/ds` to both views.
pub(crate) fn backprop_scores(
    anchors: &Matrix,
    candidates: &Matrix,
    grad_s: &Matrix,
    cfg: &LossConfig,
) -> Result<(Matrix, Matrix)> {
    let inv_tau = 1.0 / cfg.tau;
    let ga = grad_s.matmul(candidates)?.scale(inv_tau);
    let gc = grad_s.transpose_matmul(anchors)?.scale(inv_tau);
    Ok((ga, gc))
}

pub(crate) fn check_z_hat(w: &WeightMatrix, cfg: &LossConfig) -> Result<()> {
    for (anchor, &z) in w.z_hat().iter().enumerate() {
        if !(z >= cfg.epsilon) {
            return Err(Error::DegenerateWeights { anchor, z_hat: z });
        }
    }
    Ok(())
}

#[cfg(test)]
pub(crate) mod testutil {
    use super::*;
    use crate::kernels::{weight_matrix, KernelConfig, MetaBatch};
    use crate::numerics::{row_normalize, Rng};

    pub fn random_unit(rng: &mut Rng, n: usize, d: usize) -> Matrix {
        let m = Matrix::from_fn(n, d, |_, _| rng.normal());
        row_normalize(&m).unwrap()
    }

    /// Random two-view batch with rbf weights over scalar labels in [0, 10).
    pub fn random_batch(seed: u64, n: usize, d: usize, sigma: f64) -> Batch {
        let mut rng = Rng::new(seed);
        let a = random_unit(&mut rng, n, d);
        let c = random_unit(&mut rng, n, d);
        let ys: Vec<f64> = (0..n).map(|_| 10.0 * rng.uniform()).collect();
        let meta = MetaBatch::from_scalars(&ys).unwrap();
        let w = weight_matrix(&meta, &KernelConfig::rbf(sigma).unwrap()).unwrap();
        Batch::new(a, c, w).unwrap()
    }
}
