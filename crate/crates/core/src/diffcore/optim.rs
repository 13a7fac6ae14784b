//! Adaptive-moment stochastic gradient optimizer.

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Outcome of one optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    /// A non-finite gradient was seen; no parameter or moment changed.
    SkippedNonFinite,
}

/// First/second-moment state, one buffer per parameter, keyed by position.
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Restore a previously serialized state (moments flat-packed per param).
    pub fn restore(cfg: AdamConfig, step: u64, m: Vec<Tensor>, v: Vec<Tensor>) -> Self {
        Self { cfg, step, m, v }
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.m, &self.v)
    }

    /// Apply one update. Parameter order must be stable across calls; moment
    /// buffers are allocated lazily on first use.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor]) -> StepOutcome {
        assert_eq!(params.len(), grads.len(), "params/grads length mismatch");
        if grads.iter().any(|g| !g.all_finite()) {
            return StepOutcome::SkippedNonFinite;
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
            self.v = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            debug_assert_eq!(p.shape(), g.shape());
            for ((pv, gv), (mv, vv)) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()))
            {
                *mv = self.cfg.beta1 * *mv + (1.0 - self.cfg.beta1) * gv;
                *vv = self.cfg.beta2 * *vv + (1.0 - self.cfg.beta2) * gv * gv;
                let m_hat = *mv / bc1;
                let v_hat = *vv / bc2;
                *pv -= self.cfg.learning_rate * m_hat / (v_hat.sqrt() + self.cfg.epsilon);
            }
        }
        StepOutcome::Applied
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_grad(x: f64) -> f64 {
        2.0 * (x - 5.0)
    }

    #[test]
    fn converges_on_quadratic() {
        let mut x = Tensor::scalar(0.0);
        let mut opt = Adam::new(AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        });
        for _ in 0..500 {
            let g = Tensor::scalar(quadratic_grad(x.item()));
            let mut refs = [&mut x];
            opt.step(&mut refs, &[g]);
        }
        assert!(
            (x.item() - 5.0).abs() < 1e-2,
            "ended at {} after 500 steps",
            x.item()
        );
    }

    #[test]
    fn monotone_decrease_for_small_lr() {
        let mut x = Tensor::scalar(0.0);
        let mut opt = Adam::new(AdamConfig::default()); // lr 1e-3
        let mut prev_loss = (x.item() - 5.0) * (x.item() - 5.0);
        for _ in 0..200 {
            let g = Tensor::scalar(quadratic_grad(x.item()));
            let mut refs = [&mut x];
            opt.step(&mut refs, &[g]);
            let loss = (x.item() - 5.0) * (x.item() - 5.0);
            assert!(loss <= prev_loss, "loss rose: {prev_loss} -> {loss}");
            prev_loss = loss;
        }
    }

    #[test]
    fn zero_gradient_fresh_state_leaves_params_unchanged() {
        let mut x = Tensor::scalar(1.5);
        let mut opt = Adam::new(AdamConfig::default());
        let mut refs = [&mut x];
        opt.step(&mut refs, &[Tensor::scalar(0.0)]);
        assert_eq!(x.item(), 1.5);
    }

    #[test]
    fn non_finite_gradient_skips_step() {
        let mut x = Tensor::scalar(1.0);
        let mut opt = Adam::new(AdamConfig::default());
        let mut bad = Tensor::scalar(0.0);
        bad.data_mut()[0] = f64::NAN;
        let mut refs = [&mut x];
        let outcome = opt.step(&mut refs, &[bad]);
        assert_eq!(outcome, StepOutcome::SkippedNonFinite);
        assert_eq!(x.item(), 1.0);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn deterministic_given_same_state() {
        let run = || {
            let mut x = Tensor::new(vec![3], vec![0.1, -0.2, 0.3]).unwrap();
            let mut opt = Adam::new(AdamConfig::default());
            for i in 0..50 {
                let g = x.map(|v| 2.0 * v + i as f64 * 0.01);
                let mut refs = [&mut x];
                opt.step(&mut refs, &[g]);
            }
            x
        };
        let a = run();
        let b = run();
        assert_eq!(a, b); // bit-identical
    }

    #[test]
    fn step_counter_strictly_increases() {
        let mut x = Tensor::scalar(0.0);
        let mut opt = Adam::new(AdamConfig::default());
        for expect in 1..=5u64 {
            let mut refs = [&mut x];
            opt.step(&mut refs, &[Tensor::scalar(1.0)]);
            assert_eq!(opt.step_count(), expect);
        }
    }
}
