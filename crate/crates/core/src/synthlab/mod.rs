//! Synthetic generative models, exact samplers for the positive and
//! negative label distributions, and Monte Carlo checks of the large-batch
//! behaviour of the y-aware InfoNCE loss.

mod limits;
mod model;
mod samplers;

pub use limits::{
    batch_loss, convergence_experiment, log_log_slope, mc_limit_terms, summarize, ConvergenceRow,
    Estimate, GapSummary, LimitTerms, STDERR_BATCHES,
};
pub use model::{FrozenEncoder, LabelDist, MeanMap, SyntheticModel};
pub use samplers::{
    sample_negative_label, sample_negative_pair, sample_positive_label, sample_positive_pair,
    PairSample, REJECTION_BUDGET,
};
