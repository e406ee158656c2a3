//! Small fully connected network with hand-written backpropagation, the two
//! optimizers, the training loop and the checkpoint format.

mod checkpoint;
mod mlp;
mod optim;
mod train;

pub use checkpoint::{Checkpoint, LayerParams, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use mlp::{Activation, Dense, ForwardCache, Gradients, Mlp};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
pub use train::{argmax, train, TrainConfig};
