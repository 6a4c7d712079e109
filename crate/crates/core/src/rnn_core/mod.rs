//! Recurrent-network numerics in double precision.
//!
//! * [`rnn`]: plain RNN forward pass and backpropagation through time.
//! * [`gru`]: gated recurrent unit cell, sequence unrolling with a
//!   time-distributed softmax projection, and its exact gradients.
//! * [`ops`]: softmax, cross-entropy and inverted dropout.
//! * [`adam`]: the Adam optimizer.
//! * [`gradcheck`]: central finite-difference checks of the analytic gradients.

pub mod adam;
pub mod gradcheck;
pub mod gru;
pub mod ops;
pub mod rnn;

use thiserror::Error;

pub use adam::{AdamConfig, AdamState};
pub use gru::{gru_sequence, GruCell, GruSequenceOutput, OutputProjection};
pub use ops::{cross_entropy, dropout, softmax, DropoutMode};
pub use rnn::{rnn_bptt, rnn_forward, Activation, ForwardTrace, GradientSet, RnnParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("input sequence is empty")]
    EmptySequence,
    #[error("not a probability distribution: {0}")]
    BadDistribution(String),
    #[error("dropout rate {0} outside [0, 1)")]
    BadRate(f64),
}

pub(crate) fn check_len(what: &str, got: usize, want: usize) -> Result<(), RnnError> {
    if got == want {
        Ok(())
    } else {
        Err(RnnError::ShapeMismatch(format!("{what}: expected {want}, got {got}")))
    }
}

/// Mutable and immutable views over every parameter array as flat slices,
/// in a fixed order. Used by the optimizer and the finite-difference checker.
pub trait ParamSet {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}
