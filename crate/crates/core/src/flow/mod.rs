//! Invertible transformation stack with exact log-determinants, plus the
//! maximum-likelihood training loop.

pub mod actnorm;
pub mod coupling;
pub mod linear;
pub mod model;
pub mod train;

pub use actnorm::ActNorm;
pub use coupling::AffineCoupling;
pub use linear::InvertibleLinear;
pub use model::{FlowConfig, FlowModel, FlowStep, FlowVars, Nll, LN_TAU};
pub use train::{train, train_with, EpochSnapshot, TrainConfig, TrainExample, TrainingReport};
