//! Dense tensors, MLP blocks and optimizer plumbing for the graph-network surrogate.

mod checkpoint;
mod matrix;
mod mlp;
mod optim;
mod params;

pub use checkpoint::{Checkpoint, CheckpointHeader, Section};
pub use matrix::DenseMatrix;
pub use mlp::{gelu, gelu_deriv, Mlp2, MlpCache, MLP_TENSOR_NAMES};
pub use optim::{cosine_lr, ema_update, AdamWConfig, OptimState};
pub use params::{check_finite, flatten, unflatten, zero_params, ParamEntry, ParamLayout, Parameterized};
