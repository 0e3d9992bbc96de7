//! Meta-data similarity kernels and the batch weight matrix.
//!
//! Kernel families are strategies behind [`Kernel`], looked up by name in
//! [`KernelRegistry`]. All shipped families peak at exactly 1.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Proxy label of one sample: a continuous part (e.g. age) and a categorical
/// part (e.g. sex code).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct MetaRecord {
    pub continuous: Vec<f64>,
    pub categorical: Vec<u32>,
}

impl MetaRecord {
    pub fn new(continuous: Vec<f64>, categorical: Vec<u32>) -> Self {
        Self {
            continuous,
            categorical,
        }
    }

    pub fn continuous(values: &[f64]) -> Self {
        Self::new(values.to_vec(), Vec::new())
    }

    pub fn categorical(codes: &[u32]) -> Self {
        Self::new(Vec::new(), codes.to_vec())
    }
}

/// Meta-data for a batch; every record has the same arity.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct MetaBatch {
    records: Vec<MetaRecord>,
}

impl MetaBatch {
    pub fn new(records: Vec<MetaRecord>) -> Result<Self> {
        if let Some(first) = records.first() {
            for (i, r) in records.iter().enumerate() {
                if r.continuous.len() != first.continuous.len()
                    || r.categorical.len() != first.categorical.len()
                {
                    return Err(Error::ArityMismatch(format!(
                        "record {i} is ({}, {}), record 0 is ({}, {})",
                        r.continuous.len(),
                        r.categorical.len(),
                        first.continuous.len(),
                        first.categorical.len()
                    )));
                }
                if let Some(v) = r.continuous.iter().find(|v| !v.is_finite()) {
                    return Err(Error::Config(format!(
                        "record {i} has non-finite value {v}"
                    )));
                }
            }
        }
        Ok(Self { records })
    }

    /// One categorical code per sample.
    pub fn from_labels(labels: &[usize]) -> Self {
        Self {
            records: labels
                .iter()
                .map(|&l| MetaRecord::categorical(&[l as u32]))
                .collect(),
        }
    }

    /// One continuous scalar per sample.
    pub fn from_scalars(values: &[f64]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&v| MetaRecord::continuous(&[v]))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[MetaRecord] {
        &self.records
    }

    pub fn get(&self, i: usize) -> &MetaRecord {
        &self.records[i]
    }

    pub fn select(&self, idx: &[usize]) -> MetaBatch {
        MetaBatch {
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }
}

/// A similarity kernel on meta-data.
pub trait Kernel: Send + Sync {
    fn name(&self) -> &'static str;
    fn eval(&self, a: &MetaRecord, b: &MetaRecord) -> Result<f64>;
    /// `sup_{y,y'} w(y, y')`.
    fn sup_norm(&self) -> f64;
}

fn check_bandwidth(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Bandwidth(sigma))
    }
}

/// `exp(-|a - b|² / 2σ²)` on the continuous part.
pub fn rbf_kernel(a: &MetaRecord, b: &MetaRecord, sigma: f64) -> Result<f64> {
    check_bandwidth(sigma)?;
    if a.continuous.len() != b.continuous.len() {
        return Err(Error::ArityMismatch(format!(
            "continuous parts of length {} and {}",
            a.continuous.len(),
            b.continuous.len()
        )));
    }
    let sq: f64 = a
        .continuous
        .iter()
        .zip(&b.continuous)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok((-sq / (2.0 * sigma * sigma)).exp())
}

/// 1 when every categorical code matches, else 0.
pub fn categorical_kernel(a: &MetaRecord, b: &MetaRecord) -> Result<f64> {
    if a.categorical.len() != b.categorical.len() {
        return Err(Error::ArityMismatch(format!(
            "categorical parts of length {} and {}",
            a.categorical.len(),
            b.categorical.len()
        )));
    }
    Ok(if a.categorical == b.categorical {
        1.0
    } else {
        0.0
    })
}

pub fn product_kernel(a: &MetaRecord, b: &MetaRecord, sigma: f64) -> Result<f64> {
    let cat = categorical_kernel(a, b)?;
    Ok(rbf_kernel(a, b, sigma)? * cat)
}

#[derive(Clone, Copy, Debug)]
pub struct RbfKernel {
    pub sigma: f64,
}

impl Kernel for RbfKernel {
    fn name(&self) -> &'static str {
        "rbf"
    }
    fn eval(&self, a: &MetaRecord, b: &MetaRecord) -> Result<f64> {
        rbf_kernel(a, b, self.sigma)
    }
    fn sup_norm(&self) -> f64 {
        1.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CategoricalKernel;

impl Kernel for CategoricalKernel {
    fn name(&self) -> &'static str {
        "categorical"
    }
    fn eval(&self, a: &MetaRecord, b: &MetaRecord) -> Result<f64> {
        categorical_kernel(a, b)
    }
    fn sup_norm(&self) -> f64 {
        1.0
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ProductKernel {
    pub sigma: f64,
}

impl Kernel for ProductKernel {
    fn name(&self) -> &'static str {
        "product"
    }
    fn eval(&self, a: &MetaRecord, b: &MetaRecord) -> Result<f64> {
        product_kernel(a, b, self.sigma)
    }
    fn sup_norm(&self) -> f64 {
        1.0
    }
}

type KernelCtor = fn(Option<f64>) -> Result<Arc<dyn Kernel>>;

fn require_sigma(family: &str, sigma: Option<f64>) -> Result<f64> {
    let s = sigma.ok_or_else(|| Error::Config(format!("kernel `{family}` requires sigma")))?;
    check_bandwidth(s)?;
    Ok(s)
}

/// Name → constructor table of kernel families.
pub struct KernelRegistry {
    ctors: BTreeMap<&'static str, KernelCtor>,
}

impl KernelRegistry {
    pub fn empty() -> Self {
        Self {
            ctors: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, ctor: KernelCtor) {
        self.ctors.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.ctors.keys().copied()
    }

    pub fn build(&self, family: &str, sigma: Option<f64>) -> Result<Arc<dyn Kernel>> {
        let ctor = self.ctors.get(family).ok_or_else(|| Error::UnknownName {
            kind: "kernel family",
            name: family.to_string(),
        })?;
        ctor(sigma)
    }
}

impl Default for KernelRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register("rbf", |s| {
            Ok(Arc::new(RbfKernel {
                sigma: require_sigma("rbf", s)?,
            }))
        });
        r.register("categorical", |_| Ok(Arc::new(CategoricalKernel)));
        r.register("product", |s| {
            Ok(Arc::new(ProductKernel {
                sigma: require_sigma("product", s)?,
            }))
        });
        r
    }
}

/// Validated kernel choice. `sigma` has no default.
#[derive(Clone)]
pub struct KernelConfig {
    family: String,
    sigma: Option<f64>,
    sup_norm: f64,
    kernel: Arc<dyn Kernel>,
}

impl std::fmt::Debug for KernelConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KernelConfig")
            .field("family", &self.family)
            .field("sigma", &self.sigma)
            .field("sup_norm", &self.sup_norm)
            .finish()
    }
}

impl KernelConfig {
    pub fn new(family: &str, sigma: Option<f64>) -> Result<Self> {
        Self::from_registry(&KernelRegistry::default(), family, sigma)
    }

    pub fn from_registry(reg: &KernelRegistry, family: &str, sigma: Option<f64>) -> Result<Self> {
        let kernel = reg.build(family, sigma)?;
        let sup_norm = kernel.sup_norm();
        if !(sup_norm > 0.0 && sup_norm.is_finite()) {
            return Err(Error::Config(format!(
                "kernel `{family}` has sup norm {sup_norm}"
            )));
        }
        Ok(Self {
            family: family.to_string(),
            sigma,
            sup_norm,
            kernel,
        })
    }

    pub fn rbf(sigma: f64) -> Result<Self> {
        Self::new("rbf", Some(sigma))
    }

    pub fn categorical() -> Self {
        Self::new("categorical", None).expect("categorical kernel is always valid")
    }

    pub fn product(sigma: f64) -> Result<Self> {
        Self::new("product", Some(sigma))
    }

    pub fn family(&self) -> &str {
        &self.family
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn eval(&self, a: &MetaRecord, b: &MetaRecord) -> Result<f64> {
        self.kernel.eval(a, b)
    }
}

/// `||w||_∞` of the configured family.
pub fn kernel_sup_norm(cfg: &KernelConfig) -> f64 {
    cfg.sup_norm()
}

/// All pairwise kernel values of a batch plus the empirical normalizers
/// `z_hat[i] = (1/N) Σ_j w[i][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    w: Matrix,
    z_hat: Vec<f64>,
    sup_norm: f64,
}

impl WeightMatrix {
    /// Wraps a precomputed symmetric weight matrix with entries in `[0, sup_norm]`.
    pub fn from_matrix(w: Matrix, sup_norm: f64) -> Result<Self> {
        let n = w.rows();
        if w.cols() != n {
            return Err(Error::ShapeMismatch(format!(
                "weight matrix must be square, got {}x{}",
                n,
                w.cols()
            )));
        }
        for i in 0..n {
            for j in 0..n {
                let v = w.get(i, j);
                if v != w.get(j, i) {
                    return Err(Error::Config(format!(
                        "weights not symmetric at ({i}, {j})"
                    )));
                }
                if !(0.0..=sup_norm).contains(&v) {
                    return Err(Error::Config(format!(
                        "weight {v} at ({i}, {j}) outside [0, {sup_norm}]"
                    )));
                }
            }
        }
        let z_hat = w.row_iter().map(row_mean).collect();
        Ok(Self { w, z_hat, sup_norm })
    }

    /// `w[i][j] = 1` iff `i == j`: every anchor's only positive is its own view.
    pub fn identity(n: usize) -> Self {
        Self::from_matrix(Matrix::identity(n), 1.0).expect("identity weights are valid")
    }

    /// Indicator weights on integer labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        let n = labels.len();
        let w = Matrix::from_fn(n, n, |i, j| (labels[i] == labels[j]) as u8 as f64);
        Self::from_matrix(w, 1.0).expect("indicator weights are valid")
    }

    pub fn len(&self) -> usize {
        self.w.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.rows() == 0
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.w.get(i, j)
    }

    pub fn z_hat(&self) -> &[f64] {
        &self.z_hat
    }

    pub fn sup_norm(&self) -> f64 {
        self.sup_norm
    }

    pub fn select(&self, idx: &[usize]) -> WeightMatrix {
        let w = Matrix::from_fn(idx.len(), idx.len(), |a, b| self.w.get(idx[a], idx[b]));
        let z_hat = w.row_iter().map(row_mean).collect();
        WeightMatrix {
            w,
            z_hat,
            sup_norm: self.sup_norm,
        }
    }
}

fn row_mean(r: &[f64]) -> f64 {
    let mut s = 0.0;
    for v in r {
        s += v;
    }
    s / r.len() as f64
}

/// Kernel values between every pair of records in `batch`.
pub fn weight_matrix(batch: &MetaBatch, cfg: &KernelConfig) -> Result<WeightMatrix> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let mut w = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = cfg.eval(batch.get(i), batch.get(j))?;
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    let z_hat = w.row_iter().map(row_mean).collect();
    Ok(WeightMatrix {
        w,
        z_hat,
        sup_norm: cfg.sup_norm(),
    })
}
