use std::collections::BTreeMap;
use std::sync::Arc;

use super::{
    combined_objective, conditional_alignment, conditional_uniformity, global_uniformity,
    infonce_reference, supcon_reference, yaware_infonce, Batch, LossConfig, LossResult,
};
use crate::error::{Error, Result};

/// A loss over a two-view batch.
pub trait ContrastiveLoss: Send + Sync {
    fn name(&self) -> &str;

    fn evaluate(&self, batch: &Batch, cfg: &LossConfig) -> Result<LossResult>;

    /// Whether the loss reads meta-data weights (as opposed to only labels or
    /// nothing at all).
    fn uses_weights(&self) -> bool {
        true
    }
}

type LossFn = fn(&Batch, &LossConfig) -> Result<LossResult>;

/// Adapts a plain function to [`ContrastiveLoss`].
#[derive(Clone, Copy)]
pub struct FnLoss {
    name: &'static str,
    f: LossFn,
    uses_weights: bool,
}

impl FnLoss {
    pub const fn new(name: &'static str, f: LossFn, uses_weights: bool) -> Self {
        Self {
            name,
            f,
            uses_weights,
        }
    }
}

impl ContrastiveLoss for FnLoss {
    fn name(&self) -> &str {
        self.name
    }

    fn evaluate(&self, batch: &Batch, cfg: &LossConfig) -> Result<LossResult> {
        (self.f)(batch, cfg)
    }

    fn uses_weights(&self) -> bool {
        self.uses_weights
    }
}

/// Average of a loss over both view orderings.
pub struct Symmetrized(pub Arc<dyn ContrastiveLoss>);

impl ContrastiveLoss for Symmetrized {
    fn name(&self) -> &str {
        self.0.name()
    }

    fn evaluate(&self, batch: &Batch, cfg: &LossConfig) -> Result<LossResult> {
        let fwd = self.0.evaluate(batch, cfg)?;
        let bwd = self.0.evaluate(&batch.swapped(), cfg)?;
        let bwd_anchor = bwd.grad_candidate.ok_or_else(|| {
            Error::ShapeMismatch("symmetrized loss needs two-view gradients".into())
        })?;
        let fwd_candidate = fwd.grad_candidate.ok_or_else(|| {
            Error::ShapeMismatch("symmetrized loss needs two-view gradients".into())
        })?;
        Ok(LossResult::two_view(
            0.5 * (fwd.value + bwd.value),
            fwd.grad_anchor.add_scaled(&bwd_anchor, 1.0)?.scale(0.5),
            fwd_candidate.add_scaled(&bwd.grad_anchor, 1.0)?.scale(0.5),
        ))
    }

    fn uses_weights(&self) -> bool {
        self.0.uses_weights()
    }
}

fn supcon_from_batch(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let labels = b
        .labels()
        .ok_or_else(|| Error::Config("supcon needs class labels on the batch".into()))?;
    supcon_reference(b.anchors(), b.candidates(), labels, cfg)
}

fn align_global(b: &Batch, cfg: &LossConfig) -> Result<LossResult> {
    let align = conditional_alignment(b, cfg)?;
    if cfg.lambda == 0.0 {
        return Ok(align);
    }
    align.add_scaled(&global_uniformity(b, cfg)?, cfg.lambda)
}

/// Loss kinds the trainer and the comparison experiment accept.
pub const TRAINING_KINDS: [&str; 5] = [
    "infonce",
    "supcon",
    "yaware",
    "align+global_unif",
    "align+cond_unif",
];

/// Name → loss table.
#[derive(Clone)]
pub struct LossRegistry {
    losses: BTreeMap<String, Arc<dyn ContrastiveLoss>>,
}

impl LossRegistry {
    pub fn empty() -> Self {
        Self {
            losses: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, loss: Arc<dyn ContrastiveLoss>) {
        self.losses.insert(loss.name().to_string(), loss);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn ContrastiveLoss>> {
        self.losses
            .get(name)
            .cloned()
            .ok_or_else(|| Error::UnknownName {
                kind: "loss",
                name: name.to_string(),
            })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.losses.keys().map(String::as_str)
    }
}

impl Default for LossRegistry {
    /// Every loss operation under its own name, plus the training kinds.
    fn default() -> Self {
        let mut r = Self::empty();
        for loss in [
            FnLoss::new("yaware_infonce", yaware_infonce, true),
            FnLoss::new("conditional_alignment", conditional_alignment, true),
            FnLoss::new("global_uniformity", global_uniformity, false),
            FnLoss::new("conditional_uniformity", conditional_uniformity, true),
            FnLoss::new("combined_objective", combined_objective, true),
            FnLoss::new("supcon", supcon_from_batch, false),
            FnLoss::new("infonce", infonce_reference, false),
            FnLoss::new("yaware", yaware_infonce, true),
            FnLoss::new("align+global_unif", align_global, true),
            FnLoss::new("align+cond_unif", combined_objective, true),
        ] {
            r.register(Arc::new(loss));
        }
        r
    }
}
