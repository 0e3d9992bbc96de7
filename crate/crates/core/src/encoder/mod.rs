//! MLP encoder with hand-written backpropagation, optimizers, view
//! augmentation, the contrastive training loop and checkpoints.

mod augment;
mod checkpoint;
mod mlp;
mod optim;
mod train;

pub use augment::{augment, AugmentConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use mlp::{normalize_backward, normalize_forward, Dense, ForwardCache, Mlp, MlpGrads};
pub use optim::{Adam, Optimizer, OptimizerRegistry, SgdMomentum};
pub use train::{
    batch_weights, encoder_loss, init_model, train, train_with, HistoryRow, LrDecay, TrainConfig,
    TrainOutput,
};
