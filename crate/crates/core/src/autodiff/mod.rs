//! Reverse-mode differentiation, the encoder/decoder network and its
//! optimizers.

pub mod nn;
pub mod optim;
pub mod tape;

pub use nn::{Activation, Dense, Forward, ModelGraph, ModelSpec, Noise};
pub use optim::{OptimizerKind, OptimizerState};
pub use tape::{Gradients, Tape, Var};
