//! Layers, initialisers, the Adam optimiser and checkpoints.

mod adam;
mod checkpoint;
mod functional;
mod init;
mod layers;

pub use adam::{Adam, AdamConfig, LrSchedule};
pub use checkpoint::{load_checkpoint, load_into, save_checkpoint, CheckpointEntry};
pub use functional::{cross_entropy, dropout_mask, one_hot};
pub use init::{init_params, InitScheme};
pub use layers::{BatchNorm, Conv2d, LayerNorm, Linear, Mlp, Mode};

use crate::{Result, Tape, Tensor};

/// Anything with trainable tensors and persistent state.
pub trait Module {
    /// Trainable tensors, always in the same order.
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    /// Every tensor needed to restore the module (parameters and buffers),
    /// keyed by a stable name under `prefix`.
    fn state(&self, prefix: &str) -> Vec<(String, &Tensor)>;

    fn state_mut(&mut self, prefix: &str) -> Vec<(String, &mut Tensor)>;

    fn num_params(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.numel()).sum()
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Registers every tensor as a fresh leaf on `tape`.
pub fn attach(params: Vec<&mut Tensor>, tape: &Tape) {
    for p in params {
        p.attach(tape);
    }
}

/// Accumulated gradients for `params`, in order. Parameters that never
/// reached the root get zeros.
pub fn grads(params: &[&mut Tensor], tape: &Tape) -> Result<Vec<Tensor>> {
    params
        .iter()
        .map(|p| match tape.grad(p) {
            Some(g) => Ok(g),
            None => Tensor::zeros(p.shape()),
        })
        .collect()
}

/// Detaches every tensor from its tape.
pub fn release(params: Vec<&mut Tensor>) {
    for p in params {
        p.release();
    }
}
