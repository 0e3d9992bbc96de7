use serde::{Deserialize, Serialize};

use crate::encoder::Mlp;
use crate::error::{Error, Result};
use crate::kernels::MetaRecord;
use crate::numerics::{l2_norm, row_normalize, Matrix, Rng};

/// Distribution of the proxy label `y`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelDist {
    Uniform {
        lo: f64,
        hi: f64,
    },
    Mixture {
        weights: Vec<f64>,
        means: Vec<f64>,
        stds: Vec<f64>,
    },
    /// Finitely many continuous values.
    Discrete {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
    /// A categorical code `0..probs.len()`.
    Categorical {
        probs: Vec<f64>,
    },
}

/// How `y` picks the mean direction of `p(x | y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanMap {
    /// `y ∈ [lo, hi]` sweeps an arc of `arc` radians on the circle spanned by
    /// the first two axes.
    GreatCircle { lo: f64, hi: f64, arc: f64 },
    /// `y` falls into one of `count` latent classes (equal-width bins of
    /// `[lo, hi]`, or the categorical code); class `c` points along axis `c`.
    Classes { count: usize, lo: f64, hi: f64 },
}

/// Generative model `p(y) p(x | y)` on the unit sphere in `dim` dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    pub label_dist: LabelDist,
    pub mean_map: MeanMap,
    pub dim: usize,
    /// Concentration of the angular noise; `None` is noiseless.
    pub kappa: Option<f64>,
}

impl Default for SyntheticModel {
    /// `y ~ U[0, 10]`, half great circle in 8 dimensions, `kappa = 20`.
    fn default() -> Self {
        Self {
            label_dist: LabelDist::Uniform { lo: 0.0, hi: 10.0 },
            mean_map: MeanMap::GreatCircle {
                lo: 0.0,
                hi: 10.0,
                arc: std::f64::consts::PI,
            },
            dim: 8,
            kappa: Some(20.0),
        }
    }
}

fn categorical_draw(probs: &[f64], rng: &mut Rng) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

impl SyntheticModel {
    /// Latent classes on `[0, 10]`.
    pub fn with_classes(count: usize, dim: usize, kappa: Option<f64>) -> Self {
        Self {
            label_dist: LabelDist::Uniform { lo: 0.0, hi: 10.0 },
            mean_map: MeanMap::Classes {
                count,
                lo: 0.0,
                hi: 10.0,
            },
            dim,
            kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic model: {m}")));
        if self.dim < 2 {
            return bad("dim must be at least 2");
        }
        if let Some(k) = self.kappa {
            if !(k > 0.0) {
                return bad("kappa must be positive");
            }
        }
        match &self.label_dist {
            LabelDist::Uniform { lo, hi } if !(hi > lo) => return bad("empty uniform range"),
            LabelDist::Mixture {
                weights,
                means,
                stds,
            } if weights.is_empty()
                || weights.len() != means.len()
                || weights.len() != stds.len()
                || weights.iter().any(|w| !(*w >= 0.0))
                || stds.iter().any(|s| !(*s > 0.0)) =>
            {
                return bad("malformed mixture")
            }
            LabelDist::Discrete { values, probs }
                if values.is_empty()
                    || values.len() != probs.len()
                    || probs.iter().any(|p| !(*p >= 0.0)) =>
            {
                return bad("malformed discrete distribution")
            }
            LabelDist::Categorical { probs }
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0)) =>
            {
                return bad("malformed categorical distribution")
            }
            _ => {}
        }
        if let MeanMap::Classes { count, lo, hi } = self.mean_map {
            if count == 0 || count > self.dim || !(hi > lo) {
                return bad("classes need 1 <= count <= dim and a non-empty range");
            }
        }
        Ok(())
    }

    pub fn sample_label(&self, rng: &mut Rng) -> MetaRecord {
        match &self.label_dist {
            LabelDist::Uniform { lo, hi } => {
                MetaRecord::continuous(&[lo + (hi - lo) * rng.uniform()])
            }
            LabelDist::Mixture {
                weights,
                means,
                stds,
            } => {
                let k = categorical_draw(weights, rng);
                MetaRecord::continuous(&[means[k] + stds[k] * rng.normal()])
            }
            LabelDist::Discrete { values, probs } => {
                MetaRecord::continuous(&[values[categorical_draw(probs, rng)]])
            }
            LabelDist::Categorical { probs } => {
                MetaRecord::categorical(&[categorical_draw(probs, rng) as u32])
            }
        }
    }

    pub fn latent_class(&self, y: &MetaRecord) -> Option<usize> {
        match self.mean_map {
            MeanMap::Classes { count, lo, hi } => Some(match y.categorical.first() {
                Some(&code) => code as usize % count,
                None => {
                    let t = (y.continuous[0] - lo) / (hi - lo);
                    ((t * count as f64).floor().max(0.0) as usize).min(count - 1)
                }
            }),
            MeanMap::GreatCircle { .. } => None,
        }
    }

    pub fn mean_direction(&self, y: &MetaRecord) -> Vec<f64> {
        let mut mu = vec![0.0; self.dim];
        match self.mean_map {
            MeanMap::GreatCircle { lo, hi, arc } => {
                let v = y
                    .continuous
                    .first()
                    .copied()
                    .or_else(|| y.categorical.first().map(|&c| c as f64))
                    .unwrap_or(lo);
                let theta = arc * (v - lo) / (hi - lo);
                mu[0] = theta.cos();
                mu[1] = theta.sin();
            }
            MeanMap::Classes { .. } => {
                let c = self.latent_class(y).expect("class map");
                mu[c] = 1.0;
            }
        }
        mu
    }

    /// Draw from `p(x | y)`: mean direction plus isotropic Gaussian noise of
    /// scale `1/sqrt(kappa)`, projected back onto the sphere.
    pub fn sample_x(&self, y: &MetaRecord, rng: &mut Rng) -> Vec<f64> {
        let mut x = self.mean_direction(y);
        if let Some(kappa) = self.kappa {
            let s = 1.0 / kappa.sqrt();
            for v in x.iter_mut() {
                *v += s * rng.normal();
            }
            let n = l2_norm(&x);
            if n > 0.0 {
                for v in x.iter_mut() {
                    *v /= n;
                }
            }
        }
        x
    }
}

/// A fixed map from model samples to the unit sphere.
#[derive(Clone, Debug)]
pub enum FrozenEncoder {
    /// Samples are already unit vectors.
    Identity,
    /// Maps everything to one point.
    Constant(Vec<f64>),
    /// Untrained network.
    Mlp(Mlp),
}

impl FrozenEncoder {
    pub fn random_mlp(layer_dims: &[usize], rng: &mut Rng) -> Result<Self> {
        Ok(Self::Mlp(Mlp::new(layer_dims, rng)?))
    }

    pub fn encode(&self, x: &Matrix) -> Result<Matrix> {
        match self {
            FrozenEncoder::Identity => row_normalize(x),
            FrozenEncoder::Constant(p) => {
                let row = row_normalize(&Matrix::new(1, p.len(), p.clone())?)?;
                Ok(Matrix::from_fn(x.rows(), p.len(), |_, j| row.get(0, j)))
            }
            FrozenEncoder::Mlp(m) => m.embed(x),
        }
    }
}
