//! Dense-network substrate: layers, losses, Adam and a finite-difference
//! gradient checker.

mod adam;
mod checkpoint;
mod gradcheck;
mod layer;
mod loss;
mod mlp;

pub use adam::{adam_step, AdamConfig, AdamState, MlpOptimizer};
pub use checkpoint::{read_checkpoint, write_checkpoint, ModelKind, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use gradcheck::{grad_check, grad_check_coords, relative_error};
pub use layer::{dense_backward, dense_forward, Activation, DenseLayer, LayerGrads};
pub use loss::{mse_loss, mse_loss_batch, triplet_loss, LossValue};
pub use mlp::{ForwardCache, Mlp};
pub(crate) use mlp::flatten_grads;
