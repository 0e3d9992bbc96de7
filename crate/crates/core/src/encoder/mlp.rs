use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::numerics::{l2_norm, Matrix, Rng, ZERO_ROW_NORM};

static NEXT_MODEL_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_MODEL_ID.fetch_add(1, Ordering::Relaxed)
}

/// Fully connected layer `y = x W + b`, `W` stored `in × out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    /// `1 × out`.
    pub bias: Matrix,
}

/// ReLU multilayer perceptron followed by projection onto the unit sphere.
#[derive(Debug)]
pub struct Mlp {
    layer_dims: Vec<usize>,
    layers: Vec<Dense>,
    /// Identity of the current parameter values; changes on every update so
    /// caches from earlier forwards are detected as stale.
    id: u64,
}

impl Clone for Mlp {
    fn clone(&self) -> Self {
        Self {
            layer_dims: self.layer_dims.clone(),
            layers: self.layers.clone(),
            id: self.id,
        }
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layer_dims == other.layer_dims && self.layers == other.layers
    }
}

/// Activations kept by [`Mlp::forward`] for [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct ForwardCache {
    model_id: u64,
    /// Input to each layer.
    inputs: Vec<Matrix>,
    /// Pre-activation output of each layer.
    pre: Vec<Matrix>,
    norms: Vec<f64>,
    unit: Matrix,
}

/// Gradients of every parameter in [`Mlp::params`] order, plus the input.
#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub params: Vec<Matrix>,
    pub input: Matrix,
}

impl Mlp {
    /// He-initialized network. `layer_dims = [d_in, hidden.., d]`; a single
    /// entry gives the zero-depth encoder that only normalizes.
    pub fn new(layer_dims: &[usize], rng: &mut Rng) -> Result<Self> {
        if layer_dims.is_empty() || layer_dims.contains(&0) {
            return Err(Error::Config(format!("invalid layer dims {layer_dims:?}")));
        }
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let scale = (2.0 / w[0] as f64).sqrt();
                Dense {
                    weight: Matrix::from_fn(w[0], w[1], |_, _| scale * rng.normal()),
                    bias: Matrix::zeros(1, w[1]),
                }
            })
            .collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            layers,
            id: fresh_id(),
        })
    }

    /// Rebuilds a network from stored parameters.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        let mut dims = Vec::new();
        for (k, l) in layers.iter().enumerate() {
            if l.bias.shape() != (1, l.weight.cols()) {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} bias {:?}",
                    l.bias.shape()
                )));
            }
            if k == 0 {
                dims.push(l.weight.rows());
            } else if l.weight.rows() != dims[k] {
                return Err(Error::ShapeMismatch(format!(
                    "layer {k} expects {} inputs, previous layer gives {}",
                    l.weight.rows(),
                    dims[k]
                )));
            }
            dims.push(l.weight.cols());
        }
        if dims.is_empty() {
            return Err(Error::Config(
                "use Mlp::identity for a zero-depth network".into(),
            ));
        }
        Ok(Self {
            layer_dims: dims,
            layers,
            id: fresh_id(),
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            layer_dims: vec![dim],
            layers: Vec::new(),
            id: fresh_id(),
        }
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("non-empty dims")
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    /// Parameters in a fixed order: `w0, b0, w1, b1, ...`.
    pub fn params(&self) -> Vec<&Matrix> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn param_names(&self) -> Vec<String> {
        (0..self.layers.len())
            .flat_map(|k| [format!("layer{k}.weight"), format!("layer{k}.bias")])
            .collect()
    }

    /// Mutable parameters; the model gets a new identity.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.id = fresh_id();
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, ForwardCache)> {
        if x.cols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "encoder expects {} inputs, got {}",
                self.input_dim(),
                x.cols()
            )));
        }
        let last = self.layers.len();
        let mut inputs = Vec::with_capacity(last);
        let mut pre = Vec::with_capacity(last);
        let mut h = x.clone();
        for (k, layer) in self.layers.iter().enumerate() {
            let mut z = h.matmul(&layer.weight)?;
            for r in 0..z.rows() {
                for (v, b) in z.row_mut(r).iter_mut().zip(layer.bias.row(0)) {
                    *v += b;
                }
            }
            inputs.push(h);
            h = if k + 1 < last {
                z.map(|v| v.max(0.0))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        let (unit, norms) = normalize_forward(&h)?;
        Ok((
            unit.clone(),
            ForwardCache {
                model_id: self.id,
                inputs,
                pre,
                norms,
                unit,
            },
        ))
    }

    /// Features only.
    pub fn embed(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_out: &Matrix) -> Result<MlpGrads> {
        if cache.model_id != self.id || cache.pre.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_out.shape() != cache.unit.shape() {
            return Err(Error::ShapeMismatch(format!(
                "grad_out {:?} vs output {:?}",
                grad_out.shape(),
                cache.unit.shape()
            )));
        }
        let mut g = normalize_backward(&cache.unit, &cache.norms, grad_out);
        let mut params = vec![Matrix::zeros(0, 0); 2 * self.layers.len()];
        for k in (0..self.layers.len()).rev() {
            if k + 1 < self.layers.len() {
                // ReLU mask of this hidden layer
                for (gv, zv) in g.data_mut().iter_mut().zip(cache.pre[k].data()) {
                    if *zv <= 0.0 {
                        *gv = 0.0;
                    }
                }
            }
            let layer = &self.layers[k];
            params[2 * k] = cache.inputs[k].transpose_matmul(&g)?;
            let mut gb = Matrix::zeros(1, g.cols());
            for r in 0..g.rows() {
                for (b, v) in gb.row_mut(0).iter_mut().zip(g.row(r)) {
                    *b += v;
                }
            }
            params[2 * k + 1] = gb;
            g = g.matmul(&layer.weight.transpose())?;
        }
        Ok(MlpGrads { params, input: g })
    }
}

/// Row-wise `v / |v|`, returning the norms for the backward pass.
pub fn normalize_forward(v: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let mut out = v.clone();
    let mut norms = Vec::with_capacity(v.rows());
    for i in 0..v.rows() {
        let n = l2_norm(v.row(i));
        if !(n >= ZERO_ROW_NORM) {
            return Err(Error::ZeroRow { row: i, norm: n });
        }
        for x in out.row_mut(i) {
            *x /= n;
        }
        norms.push(n);
    }
    Ok((out, norms))
}

/// Vector-Jacobian product of normalization: `(g - u <u, g>) / |v|` per row.
pub fn normalize_backward(unit: &Matrix, norms: &[f64], grad: &Matrix) -> Matrix {
    let mut out = grad.clone();
    for i in 0..unit.rows() {
        let u = unit.row(i);
        let proj = crate::numerics::dot(u, grad.row(i));
        for (o, ui) in out.row_mut(i).iter_mut().zip(u) {
            *o = (*o - ui * proj) / norms[i];
        }
    }
    out
}
