//! Conditional normalizing-flow engine for frame-sequence spectral features.
//!
//! The crate trains an invertible frame-wise transformation between
//! mel-like feature matrices and a standard-normal latent space by exact
//! maximum likelihood, conditioned on speaker, prosody and phonetic
//! features. On top of the trained flow it provides:
//!
//! - latent sampling for text-to-speech style synthesis ([`modes`]),
//! - voice conversion by re-conditioning the latent code ([`modes`]),
//! - new-voice creation from a locale-conditioned per-dimension Gaussian
//!   mixture over speaker embeddings ([`speakergen`]),
//! - an objective evaluation suite: speaker-encoder cosine similarity,
//!   embedding variance, nearest-neighbor analyses and PCA ([`eval`]),
//! - a synthetic corpus with known ground-truth identities for closed-loop
//!   verification ([`synthworld`]).

// Index-based loops are the clearest way to write the small dense kernels
// this crate is made of.
#![allow(clippy::needless_range_loop)]

pub mod checkpoint;
pub mod conditioning;
pub mod diffcore;
pub mod error;
pub mod eval;
pub mod flow;
pub mod model;
pub mod modes;
pub mod rng;
pub mod speakergen;
pub mod synthworld;

pub use conditioning::{ConditionSet, MelTensor, SpeakerEmbedding, Utterance};
pub use error::{Error, Result};
pub use model::{ModelConfig, VoiceModel};
