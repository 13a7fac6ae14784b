//! Differentiable numeric substrate: tensors, a reverse-mode tape, and an
//! adaptive-moment optimizer.
//!
//! Single-threaded by design: one tape records one forward pass, parameters
//! are immutable during evaluation and mutated only by the optimizer.

pub mod optim;
pub mod tape;
pub mod tensor;

pub use optim::{Adam, AdamConfig, StepOutcome};
pub use tape::{Tape, VarId};
pub use tensor::Tensor;
