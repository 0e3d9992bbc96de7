//! First-order optimizers, selected by name through [`OptimizerRegistry`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Updates parameters in place from their gradients.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    /// `params` and `grads` must keep the same order and shapes across calls.
    fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()>;
}

fn check(params: &[&mut Matrix], grads: &[Matrix], state: &[Matrix]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} parameters, {} gradients",
            params.len(),
            grads.len()
        )));
    }
    for (k, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || state.get(k).is_some_and(|s| s.shape() != p.shape()) {
            return Err(Error::ShapeMismatch(format!("parameter {k}")));
        }
    }
    Ok(())
}

/// Heavy-ball SGD with L2 weight decay folded into the gradient.
#[derive(Clone, Debug)]
pub struct SgdMomentum {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Matrix>,
}

impl SgdMomentum {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Self {
            momentum,
            weight_decay,
            velocity: Vec::new(),
        }
    }
}

impl Optimizer for SgdMomentum {
    fn name(&self) -> &'static str {
        "sgd-momentum"
    }

    fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        check(params, grads, &self.velocity)?;
        if self.velocity.is_empty() {
            self.velocity = grads
                .iter()
                .map(|g| Matrix::zeros(g.rows(), g.cols()))
                .collect();
        }
        for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for ((pv, gv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(v.data_mut()) {
                *vv = self.momentum * *vv + gv + self.weight_decay * *pv;
                *pv -= lr * *vv;
            }
        }
        Ok(())
    }
}

/// Adam with bias correction; weight decay is added to the gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u32,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(weight_decay: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut [&mut Matrix], grads: &[Matrix], lr: f64) -> Result<()> {
        check(params, grads, &self.m)?;
        if self.m.is_empty() {
            self.m = grads
                .iter()
                .map(|g| Matrix::zeros(g.rows(), g.cols()))
                .collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, (pv, gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gd = gv + self.weight_decay * *pv;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gd;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gd * gd;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *pv -= lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

type OptimizerCtor = fn(f64) -> Box<dyn Optimizer>;

/// Name → optimizer constructor (argument: weight decay).
pub struct OptimizerRegistry {
    ctors: BTreeMap<&'static str, OptimizerCtor>,
}

impl Default for OptimizerRegistry {
    fn default() -> Self {
        let mut ctors: BTreeMap<&'static str, OptimizerCtor> = BTreeMap::new();
        ctors.insert("sgd-momentum", |wd| Box::new(SgdMomentum::new(0.9, wd)));
        ctors.insert("adam", |wd| Box::new(Adam::new(wd)));
        Self { ctors }
    }
}

impl OptimizerRegistry {
    pub fn register(&mut self, name: &'static str, ctor: OptimizerCtor) {
        self.ctors.insert(name, ctor);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.ctors.keys().copied()
    }

    pub fn build(&self, name: &str, weight_decay: f64) -> Result<Box<dyn Optimizer>> {
        self.ctors
            .get(name)
            .map(|c| c(weight_decay))
            .ok_or_else(|| Error::UnknownName {
                kind: "optimizer",
                name: name.to_string(),
            })
    }
}
