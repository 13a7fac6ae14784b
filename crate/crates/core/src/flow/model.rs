//! The invertible stack and its exact-likelihood objective.
//!
//! A model is `K` steps, each actnorm -> invertible linear -> conditional
//! affine coupling, mapping a `t x d` feature matrix to a latent of the same
//! shape under a standard-normal prior. Every step has an analytic
//! log-determinant, so the change-of-variables likelihood is exact, and every
//! step has an exact inverse, so the latent is a lossless encoding.
//!
//! The degenerate single-channel configuration (`d == 1`) carries no coupling
//! (there is nothing to split); steps are actnorm + linear only.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::MelTensor;
use crate::diffcore::tape::{Tape, VarId};
use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};

use super::actnorm::{ActNorm, ActNormVars};
use super::coupling::{AffineCoupling, AffineCouplingVars};
use super::linear::{InvertibleLinear, InvertibleLinearVars};

pub const LN_TAU: f64 = 1.8378770664093453; // ln(2*pi)

/// Architecture hyperparameters of the flow stack.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    /// Feature bins per frame (`d`). Must be 1 or even.
    pub bins: usize,
    /// Number of flow steps (`K`).
    pub n_steps: usize,
    /// Hidden width of the coupling nets.
    pub hidden: usize,
    /// Per-frame conditioning width fed to the coupling nets.
    pub cond_dim: usize,
    /// Log-scale saturation bound.
    pub clamp: f64,
    /// Coupling convolution kernel (odd).
    pub kernel: usize,
}

impl FlowConfig {
    pub fn with_dims(bins: usize, cond_dim: usize) -> Self {
        Self {
            bins,
            n_steps: 8,
            hidden: 64,
            cond_dim,
            clamp: 5.0,
            kernel: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowStep {
    pub actnorm: ActNorm,
    pub linear: InvertibleLinear,
    pub coupling: Option<AffineCoupling>,
}

#[derive(Debug, Clone, Copy)]
pub struct FlowStepVars {
    pub actnorm: ActNormVars,
    pub linear: InvertibleLinearVars,
    pub coupling: Option<AffineCouplingVars>,
}

/// Tape handles for all model parameters, in binding order.
pub struct FlowVars {
    pub steps: Vec<FlowStepVars>,
}

/// Likelihood breakdown for one utterance.
#[derive(Debug, Clone, Copy)]
pub struct Nll {
    /// Negative log-likelihood, total nats.
    pub total: f64,
    /// `total / (t * d)`, the reporting unit.
    pub per_element: f64,
    pub log_prior: f64,
    pub logdet: f64,
}

#[derive(Debug, Clone)]
pub struct FlowModel {
    cfg: FlowConfig,
    pub steps: Vec<FlowStep>,
}

impl FlowModel {
    /// Fresh model at the identity: zero-initialized couplings, unit
    /// actnorm, identity channel maps.
    pub fn new<R: Rng + ?Sized>(cfg: FlowConfig, rng: &mut R) -> Result<Self> {
        if cfg.bins == 0 || (cfg.bins > 1 && !cfg.bins.is_multiple_of(2)) {
            return Err(Error::Config(format!(
                "flow needs d == 1 or an even d >= 2, got {}",
                cfg.bins
            )));
        }
        if cfg.n_steps == 0 {
            return Err(Error::Config("flow needs at least one step".into()));
        }
        let mut steps = Vec::with_capacity(cfg.n_steps);
        for k in 0..cfg.n_steps {
            let coupling = if cfg.bins >= 2 {
                Some(AffineCoupling::new(
                    cfg.bins,
                    cfg.cond_dim,
                    cfg.hidden,
                    cfg.kernel,
                    cfg.clamp,
                    k % 2 == 1, // alternate transformed halves
                    rng,
                )?)
            } else {
                None
            };
            steps.push(FlowStep {
                actnorm: ActNorm::new(cfg.bins),
                linear: InvertibleLinear::identity(cfg.bins),
                coupling,
            });
        }
        Ok(Self { cfg, steps })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.cfg
    }

    pub fn bins(&self) -> usize {
        self.cfg.bins
    }

    pub fn cond_dim(&self) -> usize {
        self.cfg.cond_dim
    }

    /// Scatter all parameters to random values (test models). Keeps the
    /// channel maps well-conditioned by factoring random matrices.
    pub fn randomize<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) -> Result<()> {
        let d = self.cfg.bins;
        for step in &mut self.steps {
            step.actnorm.log_scale = Tensor::randn(&[d], 0.2, rng);
            step.actnorm.bias = Tensor::randn(&[d], std, rng);
            step.actnorm.initialized = true;
            let w = loop {
                let cand = tensor::add(&Tensor::eye(d), &Tensor::randn(&[d, d], 0.3, rng))?;
                if let Ok(lin) = InvertibleLinear::from_matrix(&cand) {
                    break lin;
                }
            };
            step.linear = w;
            if let Some(c) = &mut step.coupling {
                let h = c.hidden;
                let k = c.kernel;
                c.w2 = Tensor::randn(&[k * h, 2 * c.half], std * 0.3, rng);
                c.b2 = Tensor::randn(&[2 * c.half], std * 0.3, rng);
            }
        }
        Ok(())
    }

    fn check_inputs(&self, x: &Tensor, cond: &Tensor) -> Result<()> {
        if x.cols() != self.cfg.bins {
            return Err(Error::ShapeMismatch {
                op: "flow input",
                lhs: x.shape().to_vec(),
                rhs: vec![self.cfg.bins],
            });
        }
        if cond.rows() != x.rows() || cond.cols() != self.cfg.cond_dim {
            return Err(Error::ShapeMismatch {
                op: "flow conditioning",
                lhs: cond.shape().to_vec(),
                rhs: vec![x.rows(), self.cfg.cond_dim],
            });
        }
        Ok(())
    }

    /// Map features to the latent; returns `(z, total logdet)`.
    pub fn forward(&self, m: &MelTensor, cond: &Tensor) -> Result<(MelTensor, f64)> {
        self.check_inputs(m.tensor(), cond)?;
        let mut x = m.tensor().clone();
        let mut logdet = 0.0;
        for step in &self.steps {
            let (y, ld) = step.actnorm.forward(&x)?;
            logdet += ld;
            let (y, ld) = step.linear.forward(&y)?;
            logdet += ld;
            x = y;
            if let Some(c) = &step.coupling {
                let (y, ld) = c.forward(&x, cond)?;
                logdet += ld;
                x = y;
            }
        }
        Ok((MelTensor::from_tensor(x)?, logdet))
    }

    /// Map a latent back to features; exact inverse of [`forward`].
    pub fn inverse(&self, z: &MelTensor, cond: &Tensor) -> Result<MelTensor> {
        self.check_inputs(z.tensor(), cond)?;
        let mut x = z.tensor().clone();
        for step in self.steps.iter().rev() {
            if let Some(c) = &step.coupling {
                x = c.inverse(&x, cond)?;
            }
            x = step.linear.inverse(&x)?;
            x = step.actnorm.inverse(&x)?;
        }
        MelTensor::from_tensor(x)
    }

    /// Exact negative log-likelihood under the standard-normal prior.
    pub fn nll(&self, m: &MelTensor, cond: &Tensor) -> Result<Nll> {
        let (z, logdet) = self.forward(m, cond)?;
        let n = (m.frames() * m.bins()) as f64;
        let sumsq: f64 = z.tensor().data().iter().map(|v| v * v).sum();
        let log_prior = -0.5 * sumsq - 0.5 * n * LN_TAU;
        let total = -(log_prior + logdet);
        Ok(Nll {
            total,
            per_element: total / n,
            log_prior,
            logdet,
        })
    }

    pub fn bind(&self, tape: &mut Tape) -> FlowVars {
        FlowVars {
            steps: self
                .steps
                .iter()
                .map(|s| FlowStepVars {
                    actnorm: s.actnorm.bind(tape),
                    linear: s.linear.bind(tape),
                    coupling: s.coupling.as_ref().map(|c| c.bind(tape)),
                })
                .collect(),
        }
    }

    /// Recorded forward; returns `(z, total logdet)` tape vars.
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        x: VarId,
        cond: VarId,
        vars: &FlowVars,
    ) -> Result<(VarId, VarId)> {
        self.check_inputs(tape.value(x), tape.value(cond))?;
        let mut cur = x;
        let mut logdet: Option<VarId> = None;
        let push_ld = |tape: &mut Tape, acc: &mut Option<VarId>, ld: VarId| -> Result<()> {
            *acc = Some(match *acc {
                Some(prev) => tape.add(prev, ld)?,
                None => ld,
            });
            Ok(())
        };
        for (step, sv) in self.steps.iter().zip(&vars.steps) {
            let (y, ld) = step.actnorm.forward_on_tape(tape, cur, sv.actnorm)?;
            push_ld(tape, &mut logdet, ld)?;
            let (y2, ld) = step.linear.forward_on_tape(tape, y, sv.linear)?;
            push_ld(tape, &mut logdet, ld)?;
            cur = y2;
            if let (Some(c), Some(cv)) = (&step.coupling, sv.coupling) {
                let (y3, ld) = c.forward_on_tape(tape, cur, cond, cv)?;
                push_ld(tape, &mut logdet, ld)?;
                cur = y3;
            }
        }
        Ok((cur, logdet.expect("at least one step")))
    }

    /// Recorded per-element NLL (the training loss).
    pub fn nll_on_tape(
        &self,
        tape: &mut Tape,
        x: VarId,
        cond: VarId,
        vars: &FlowVars,
    ) -> Result<VarId> {
        let n = tape.value(x).numel() as f64;
        let (z, logdet) = self.forward_on_tape(tape, x, cond, vars)?;
        let zsq = tape.mul(z, z)?;
        let sumsq = tape.sum(zsq);
        let half = tape.scale(sumsq, 0.5);
        let with_const = tape.add_scalar(half, 0.5 * n * LN_TAU);
        let total = tape.sub(with_const, logdet)?;
        Ok(tape.scale(total, 1.0 / n))
    }

    /// Sequential data-dependent actnorm initialization: each step's actnorm
    /// standardizes the activations that actually reach it for this batch.
    pub fn init_actnorms(&mut self, batch: &[(&MelTensor, &Tensor)]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::Data("actnorm init needs a non-empty batch".into()));
        }
        let mut acts: Vec<Tensor> = batch.iter().map(|(m, _)| m.tensor().clone()).collect();
        for step in &mut self.steps {
            let mut stacked = Vec::new();
            for a in &acts {
                stacked.extend_from_slice(a.data());
            }
            let rows = stacked.len() / self.cfg.bins;
            step.actnorm
                .init_from_data(&Tensor::new(vec![rows, self.cfg.bins], stacked)?)?;
            for (a, (_, cond)) in acts.iter_mut().zip(batch) {
                let (y, _) = step.actnorm.forward(a)?;
                let (y, _) = step.linear.forward(&y)?;
                *a = y;
                if let Some(c) = &step.coupling {
                    let (y, _) = c.forward(a, cond)?;
                    *a = y;
                }
            }
        }
        Ok(())
    }

    pub fn actnorms_initialized(&self) -> bool {
        self.steps.iter().all(|s| s.actnorm.initialized)
    }

    pub fn set_actnorms_initialized(&mut self, value: bool) {
        for s in &mut self.steps {
            s.actnorm.initialized = value;
        }
    }

    /// Visit `(name, tensor)` for every parameter in stable order.
    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        for (k, step) in self.steps.iter().enumerate() {
            f(&format!("step{k}.actnorm.log_scale"), &step.actnorm.log_scale);
            f(&format!("step{k}.actnorm.bias"), &step.actnorm.bias);
            f(&format!("step{k}.linear.lower"), &step.linear.lower);
            f(&format!("step{k}.linear.upper"), &step.linear.upper);
            f(&format!("step{k}.linear.log_diag"), &step.linear.log_diag);
            if let Some(c) = &step.coupling {
                f(&format!("step{k}.coupling.w1"), &c.w1);
                f(&format!("step{k}.coupling.b1"), &c.b1);
                f(&format!("step{k}.coupling.wc"), &c.wc);
                f(&format!("step{k}.coupling.bc"), &c.bc);
                f(&format!("step{k}.coupling.w2"), &c.w2);
                f(&format!("step{k}.coupling.b2"), &c.b2);
            }
        }
    }

    /// Mutable parameter references in the exact order of [`visit_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for step in &mut self.steps {
            out.push(&mut step.actnorm.log_scale);
            out.push(&mut step.actnorm.bias);
            out.push(&mut step.linear.lower);
            out.push(&mut step.linear.upper);
            out.push(&mut step.linear.log_diag);
            if let Some(c) = &mut step.coupling {
                out.push(&mut c.w1);
                out.push(&mut c.b1);
                out.push(&mut c.wc);
                out.push(&mut c.bc);
                out.push(&mut c.w2);
                out.push(&mut c.b2);
            }
        }
        out
    }

    /// Mutable variant of [`visit_params`], same order.
    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        for (k, step) in self.steps.iter_mut().enumerate() {
            f(&format!("step{k}.actnorm.log_scale"), &mut step.actnorm.log_scale);
            f(&format!("step{k}.actnorm.bias"), &mut step.actnorm.bias);
            f(&format!("step{k}.linear.lower"), &mut step.linear.lower);
            f(&format!("step{k}.linear.upper"), &mut step.linear.upper);
            f(&format!("step{k}.linear.log_diag"), &mut step.linear.log_diag);
            if let Some(c) = &mut step.coupling {
                f(&format!("step{k}.coupling.w1"), &mut c.w1);
                f(&format!("step{k}.coupling.b1"), &mut c.b1);
                f(&format!("step{k}.coupling.wc"), &mut c.wc);
                f(&format!("step{k}.coupling.bc"), &mut c.bc);
                f(&format!("step{k}.coupling.w2"), &mut c.w2);
                f(&format!("step{k}.coupling.b2"), &mut c.b2);
            }
        }
    }

    /// Flatten the per-parameter gradients after a backward pass, in the
    /// exact order of [`visit_params`].
    pub fn collect_grads(&self, tape: &Tape, vars: &FlowVars) -> Vec<Tensor> {
        let mut out = Vec::new();
        for sv in &vars.steps {
            out.push(tape.param_grad(sv.actnorm.log_scale));
            out.push(tape.param_grad(sv.actnorm.bias));
            out.push(tape.param_grad(sv.linear.lower));
            out.push(tape.param_grad(sv.linear.upper));
            out.push(tape.param_grad(sv.linear.log_diag));
            if let Some(cv) = sv.coupling {
                out.push(tape.param_grad(cv.w1));
                out.push(tape.param_grad(cv.b1));
                out.push(tape.param_grad(cv.wc));
                out.push(tape.param_grad(cv.bc));
                out.push(tape.param_grad(cv.w2));
                out.push(tape.param_grad(cv.b2));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn random_model(d: usize, k: usize, cond_dim: usize, seed: u64) -> FlowModel {
        let cfg = FlowConfig {
            bins: d,
            n_steps: k,
            hidden: 8,
            cond_dim,
            clamp: 5.0,
            kernel: 3,
        };
        let mut rng = rng::seeded(seed);
        let mut m = FlowModel::new(cfg, &mut rng).unwrap();
        m.randomize(0.5, &mut rng).unwrap();
        m
    }

    fn random_inputs(t: usize, d: usize, cond_dim: usize, seed: u64) -> (MelTensor, Tensor) {
        let mut r = rng::seeded(seed);
        let m = MelTensor::from_tensor(Tensor::randn(&[t, d], 1.0, &mut r)).unwrap();
        let cond = Tensor::randn(&[t, cond_dim], 1.0, &mut r);
        (m, cond)
    }

    #[test]
    fn identity_at_init_maps_input_to_itself() {
        let cfg = FlowConfig::with_dims(4, 3);
        let model = FlowModel::new(cfg, &mut rng::seeded(1)).unwrap();
        let (m, cond) = random_inputs(5, 4, 3, 2);
        let (z, logdet) = model.forward(&m, &cond).unwrap();
        assert!(z.max_abs_diff(&m) < 1e-15);
        assert_eq!(logdet, 0.0);
    }

    #[test]
    fn inverse_of_zero_latent_on_identity_model_is_zero() {
        let cfg = FlowConfig::with_dims(4, 3);
        let model = FlowModel::new(cfg, &mut rng::seeded(3)).unwrap();
        let z = MelTensor::new(6, 4, vec![0.0; 24]).unwrap();
        let cond = Tensor::zeros(&[6, 3]);
        let m = model.inverse(&z, &cond).unwrap();
        assert!(m.tensor().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn roundtrip_exact_on_random_model() {
        let model = random_model(4, 4, 3, 4);
        let (m, cond) = random_inputs(12, 4, 3, 5);
        let (z, _) = model.forward(&m, &cond).unwrap();
        let back = model.inverse(&z, &cond).unwrap();
        assert!(back.max_abs_diff(&m) <= 1e-10, "{}", back.max_abs_diff(&m));
    }

    #[test]
    fn inverse_is_deterministic() {
        let model = random_model(4, 3, 2, 6);
        let (z, cond) = random_inputs(8, 4, 2, 7);
        let a = model.inverse(&z, &cond).unwrap();
        let b = model.inverse(&z, &cond).unwrap();
        assert_eq!(a.tensor(), b.tensor());
    }

    #[test]
    fn nll_of_zero_input_identity_model() {
        // Identity flow, m = 0, t=1, d=2: NLL = 2 * 0.5 ln(2*pi) total,
        // 0.5 ln(2*pi) per element.
        let cfg = FlowConfig::with_dims(2, 2);
        let model = FlowModel::new(cfg, &mut rng::seeded(8)).unwrap();
        let m = MelTensor::new(1, 2, vec![0.0, 0.0]).unwrap();
        let cond = Tensor::zeros(&[1, 2]);
        let nll = model.nll(&m, &cond).unwrap();
        assert!((nll.total - 1.8378770664093453).abs() < 1e-9, "{}", nll.total);
        assert!((nll.per_element - 0.9189385332046727).abs() < 1e-9);
    }

    #[test]
    fn full_jacobian_logdet_oracle_small_model() {
        // Numerically differentiate the flattened forward map and compare its
        // log |det J| (via dense LU) against the analytic logdet.
        let model = random_model(2, 2, 2, 9);
        let (m, cond) = random_inputs(2, 2, 2, 10);
        let n = 4; // t*d
        let h = 1e-5;
        let mut jac = vec![0.0; n * n];
        let base = m.tensor().data().to_vec();
        for col in 0..n {
            let mut plus = base.clone();
            plus[col] += h;
            let mut minus = base.clone();
            minus[col] -= h;
            let zp = model
                .forward(&MelTensor::new(2, 2, plus).unwrap(), &cond)
                .unwrap()
                .0;
            let zm = model
                .forward(&MelTensor::new(2, 2, minus).unwrap(), &cond)
                .unwrap()
                .0;
            for row in 0..n {
                jac[row * n + col] =
                    (zp.tensor().data()[row] - zm.tensor().data()[row]) / (2.0 * h);
            }
        }
        // dense determinant by gaussian elimination
        let mut a = jac.clone();
        let mut det: f64 = 1.0;
        for k in 0..n {
            let mut piv = k;
            for i in k + 1..n {
                if a[i * n + k].abs() > a[piv * n + k].abs() {
                    piv = i;
                }
            }
            if piv != k {
                for j in 0..n {
                    a.swap(k * n + j, piv * n + j);
                }
                det = -det;
            }
            det *= a[k * n + k];
            for i in k + 1..n {
                let f = a[i * n + k] / a[k * n + k];
                for j in k..n {
                    a[i * n + j] -= f * a[k * n + j];
                }
            }
        }
        let numeric = det.abs().ln();
        let (_, analytic) = model.forward(&m, &cond).unwrap();
        let rel = (numeric - analytic).abs() / analytic.abs().max(1e-6);
        assert!(rel <= 1e-3, "numeric {numeric} vs analytic {analytic}");
    }

    #[test]
    fn tape_forward_matches_pure_forward() {
        let model = random_model(4, 3, 3, 11);
        let (m, cond) = random_inputs(6, 4, 3, 12);
        let (z_pure, ld_pure) = model.forward(&m, &cond).unwrap();

        let mut tape = Tape::new();
        let vars = model.bind(&mut tape);
        let xv = tape.leaf(m.tensor().clone());
        let cv = tape.leaf(cond.clone());
        let (zv, ldv) = model.forward_on_tape(&mut tape, xv, cv, &vars).unwrap();
        assert!(tape.value(zv).max_abs_diff(z_pure.tensor()) < 1e-12);
        assert!((tape.value(ldv).item() - ld_pure).abs() < 1e-12);

        let nll_pure = model.nll(&m, &cond).unwrap();
        let mut tape2 = Tape::new();
        let vars2 = model.bind(&mut tape2);
        let xv2 = tape2.leaf(m.tensor().clone());
        let cv2 = tape2.leaf(cond);
        let lv = model.nll_on_tape(&mut tape2, xv2, cv2, &vars2).unwrap();
        assert!((tape2.value(lv).item() - nll_pure.per_element).abs() < 1e-12);
    }

    #[test]
    fn single_channel_model_supported_without_coupling() {
        let cfg = FlowConfig {
            bins: 1,
            n_steps: 3,
            hidden: 4,
            cond_dim: 2,
            clamp: 5.0,
            kernel: 3,
        };
        let mut rng = rng::seeded(13);
        let mut model = FlowModel::new(cfg, &mut rng).unwrap();
        model.randomize(0.5, &mut rng).unwrap();
        assert!(model.steps.iter().all(|s| s.coupling.is_none()));
        let (m, cond) = random_inputs(4, 1, 2, 14);
        let (z, _) = model.forward(&m, &cond).unwrap();
        let back = model.inverse(&z, &cond).unwrap();
        assert!(back.max_abs_diff(&m) < 1e-10);
    }

    #[test]
    fn odd_channel_count_above_one_rejected() {
        let cfg = FlowConfig::with_dims(3, 2);
        assert!(FlowModel::new(cfg, &mut rng::seeded(15)).is_err());
    }

    #[test]
    fn concurrent_inference_on_shared_model() {
        // parameters are immutable during inference; forward/inverse from
        // multiple threads must agree with the single-threaded result
        let model = random_model(4, 3, 2, 99);
        let (m, cond) = random_inputs(10, 4, 2, 100);
        let (z_ref, ld_ref) = model.forward(&m, &cond).unwrap();
        std::thread::scope(|s| {
            for _ in 0..4 {
                s.spawn(|| {
                    let (z, ld) = model.forward(&m, &cond).unwrap();
                    assert_eq!(z.tensor(), z_ref.tensor());
                    assert_eq!(ld.to_bits(), ld_ref.to_bits());
                    let back = model.inverse(&z, &cond).unwrap();
                    assert!(back.max_abs_diff(&m) < 1e-9);
                });
            }
        });
    }

    #[test]
    fn actnorm_init_standardizes_first_layer() {
        let cfg = FlowConfig::with_dims(4, 3);
        let mut model = FlowModel::new(cfg, &mut rng::seeded(16)).unwrap();
        let (m1, c1) = random_inputs(20, 4, 3, 17);
        let (m2, c2) = random_inputs(24, 4, 3, 18);
        model.init_actnorms(&[(&m1, &c1), (&m2, &c2)]).unwrap();
        assert!(model.actnorms_initialized());
        // first actnorm sees the raw inputs: output over the batch is ~N(0,1)
        let (y1, _) = model.steps[0].actnorm.forward(m1.tensor()).unwrap();
        let (y2, _) = model.steps[0].actnorm.forward(m2.tensor()).unwrap();
        let mut all = y1.data().to_vec();
        all.extend_from_slice(y2.data());
        let n = (all.len() / 4) as f64;
        for c in 0..4 {
            let vals: Vec<f64> = all.chunks(4).map(|row| row[c]).collect();
            let mean = vals.iter().sum::<f64>() / n;
            assert!(mean.abs() < 1e-9);
        }
    }
}
