use super::Dataset;
use crate::error::{Error, Result};
use crate::kernels::{MetaBatch, MetaRecord};
use crate::numerics::{Matrix, Rng};
use crate::synthlab::{MeanMap, SyntheticModel};

/// Knobs of the synthetic training bed beyond the generative model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SyntheticDataOptions {
    pub nuisance_dim: usize,
    /// Signal coordinates are `0.5 + signal_scale · x` for `x` on the sphere.
    pub signal_scale: f64,
    /// Standard deviation of the nuisance coordinates around 0.5.
    pub nuisance_std: f64,
    /// Standard deviation of the jitter added to each class's meta value.
    pub meta_jitter: f64,
}

impl Default for SyntheticDataOptions {
    fn default() -> Self {
        Self {
            nuisance_dim: 56,
            signal_scale: 0.25,
            nuisance_std: 0.12,
            meta_jitter: 0.5,
        }
    }
}

impl SyntheticDataOptions {
    /// Three latent classes in 8 signal dimensions.
    pub fn default_model() -> SyntheticModel {
        SyntheticModel::with_classes(3, 8, Some(8.0))
    }
}

/// [`make_synthetic_dataset_with`] at the default signal and noise levels.
pub fn make_synthetic_dataset(
    m: &SyntheticModel,
    n: usize,
    nuisance_dim: usize,
    rng: &mut Rng,
) -> Result<Dataset> {
    let opts = SyntheticDataOptions {
        nuisance_dim,
        ..Default::default()
    };
    make_synthetic_dataset_with(m, n, &opts, rng)
}

/// Samples `y ~ p(y)` and `x ~ p(x | y)` from the model, then embeds `x`
/// next to pure-noise nuisance coordinates.
///
/// Labels are the latent classes of `y`. Meta-data are the midpoint of the
/// class's label range plus Gaussian jitter; models without latent classes
/// get a single label and keep `y` itself as meta-data.
pub fn make_synthetic_dataset_with(
    m: &SyntheticModel,
    n: usize,
    opts: &SyntheticDataOptions,
    rng: &mut Rng,
) -> Result<Dataset> {
    m.validate()?;
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let d_in = m.dim + opts.nuisance_dim;
    let mut inputs = Vec::with_capacity(n * d_in);
    let mut labels = Vec::with_capacity(n);
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let y = m.sample_label(rng);
        let x = m.sample_x(&y, rng);
        inputs.extend(
            x.iter()
                .map(|v| (0.5 + opts.signal_scale * v).clamp(0.0, 1.0)),
        );
        for _ in 0..opts.nuisance_dim {
            inputs.push((0.5 + opts.nuisance_std * rng.normal()).clamp(0.0, 1.0));
        }
        match (m.latent_class(&y), &m.mean_map) {
            (Some(c), MeanMap::Classes { count, lo, hi }) => {
                let center = lo + (c as f64 + 0.5) * (hi - lo) / *count as f64;
                labels.push(c);
                records.push(MetaRecord::continuous(&[
                    center + opts.meta_jitter * rng.normal()
                ]));
            }
            _ => {
                labels.push(0);
                records.push(y);
            }
        }
    }
    let classes = match m.mean_map {
        MeanMap::Classes { count, .. } => count,
        MeanMap::GreatCircle { .. } => 1,
    };
    Dataset::new(
        Matrix::new(n, d_in, inputs)?,
        labels,
        MetaBatch::new(records)?,
        classes,
        None,
    )
}
