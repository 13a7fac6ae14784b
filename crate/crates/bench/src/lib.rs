//! Shared builders for the benchmark targets.

use nfvc_core::conditioning::MelTensor;
use nfvc_core::diffcore::tensor::Tensor;
use nfvc_core::flow::{FlowConfig, FlowModel};
use nfvc_core::rng;

pub const BINS: usize = 8;
pub const COND_DIM: usize = 34;
pub const FRAMES: usize = 32;

/// A randomized default-size model (K=8, d=8) with matching inputs.
pub fn bench_model() -> (FlowModel, MelTensor, Tensor) {
    let cfg = FlowConfig {
        bins: BINS,
        n_steps: 8,
        hidden: 64,
        cond_dim: COND_DIM,
        clamp: 5.0,
        kernel: 3,
    };
    let mut r = rng::seeded(7);
    let mut model = FlowModel::new(cfg, &mut r).expect("model");
    model.randomize(0.12, &mut r).expect("randomize");
    let mel = MelTensor::from_tensor(Tensor::randn(&[FRAMES, BINS], 1.0, &mut r)).expect("mel");
    let cond = Tensor::randn(&[FRAMES, COND_DIM], 1.0, &mut r);
    (model, mel, cond)
}
