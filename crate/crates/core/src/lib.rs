//! Mutual-information estimation and Deep InfoMax representation learning on
//! a small self-contained autodiff engine.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`]: dense tensors, the reverse-mode tape, gradient checking and
//!   the `DIMT` binary format.
//! * [`nn`]: layers, initialisers, Adam and checkpoints.
//! * [`mi`]: score matrices, the DV / JSD / infoNCE estimators, negative
//!   sampling and a MINE-style critic trainer.
//! * [`dim`]: the encoder, local/global scorers, prior matching and the
//!   combined training step.
//! * [`structure`]: occlusion masks and coordinate-prediction losses.
//! * [`ndm`]: the neural dependency measure.
//! * [`discrete`]: exact discrete MI/JSD and the monotonicity experiment.
//! * [`data`]: synthetic sources with known information content and the
//!   frozen-feature probes.

pub mod data;
pub mod dim;
pub mod gradsuite;
pub mod discrete;
mod error;
pub mod mi;
pub mod ndm;
pub mod nn;
mod rng;
pub mod stats;
pub mod structure;
pub mod tensor;

pub use error::{Error, Result};
pub use rng::Rng;
pub use tensor::{DType, Tape, Tensor};
