//! Conditional affine coupling.
//!
//! One channel half passes through unchanged and, together with the frame
//! conditioning, drives a small conv net that predicts a log-scale and shift
//! for the other half. The net is two 1-D convolutions over time (kernel 3)
//! with a tanh in between; conditioning frames are projected and added after
//! the first convolution. The final convolution is zero-initialized, so a
//! fresh layer is the identity. The log-scale is saturated smoothly to
//! `(-clamp, clamp)`, which keeps `exp(log_s)` bounded away from zero and
//! infinity for any net output.
//!
//! Consecutive layers alternate which half is transformed (`flip`) so every
//! channel is updated somewhere in the stack.

use rand::Rng;

use crate::diffcore::tape::{Tape, VarId};
use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct AffineCoupling {
    pub half: usize,
    pub cond_dim: usize,
    pub hidden: usize,
    pub kernel: usize,
    pub clamp: f64,
    /// When set, the upper half is passive and the lower half is transformed.
    pub flip: bool,
    pub w1: Tensor,
    pub b1: Tensor,
    pub wc: Tensor,
    pub bc: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

#[derive(Debug, Clone, Copy)]
pub struct AffineCouplingVars {
    pub w1: VarId,
    pub b1: VarId,
    pub wc: VarId,
    pub bc: VarId,
    pub w2: VarId,
    pub b2: VarId,
}

impl AffineCoupling {
    pub fn new<R: Rng + ?Sized>(
        channels: usize,
        cond_dim: usize,
        hidden: usize,
        kernel: usize,
        clamp: f64,
        flip: bool,
        rng: &mut R,
    ) -> Result<Self> {
        if channels < 2 || !channels.is_multiple_of(2) {
            return Err(Error::Data(format!(
                "affine coupling needs an even channel count >= 2, got {channels}"
            )));
        }
        if kernel.is_multiple_of(2) {
            return Err(Error::Data(format!("coupling kernel must be odd, got {kernel}")));
        }
        let half = channels / 2;
        let w1_std = 1.0 / ((kernel * half) as f64).sqrt();
        let wc_std = 1.0 / (cond_dim as f64).sqrt();
        Ok(Self {
            half,
            cond_dim,
            hidden,
            kernel,
            clamp,
            flip,
            w1: Tensor::randn(&[kernel * half, hidden], w1_std, rng),
            b1: Tensor::zeros(&[hidden]),
            wc: Tensor::randn(&[cond_dim, hidden], wc_std, rng),
            bc: Tensor::zeros(&[hidden]),
            // Zero-initialized output layer: identity transform at init.
            w2: Tensor::zeros(&[kernel * hidden, 2 * half]),
            b2: Tensor::zeros(&[2 * half]),
        })
    }

    pub fn channels(&self) -> usize {
        2 * self.half
    }

    fn split(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let d = self.channels();
        if x.cols() != d {
            return Err(Error::ShapeMismatch {
                op: "coupling split",
                lhs: x.shape().to_vec(),
                rhs: vec![d],
            });
        }
        let lo = tensor::slice_cols(x, 0, self.half)?;
        let hi = tensor::slice_cols(x, self.half, d)?;
        Ok(if self.flip { (hi, lo) } else { (lo, hi) })
    }

    fn join(&self, passive: &Tensor, active: &Tensor) -> Result<Tensor> {
        if self.flip {
            tensor::concat_cols(active, passive)
        } else {
            tensor::concat_cols(passive, active)
        }
    }

    /// Smoothly saturated log-scale: `clamp * tanh(raw / clamp)`.
    fn clamp_log_s(&self, raw: &Tensor) -> Tensor {
        let c = self.clamp;
        raw.map(|v| c * (v / c).tanh())
    }

    /// The coupling net: passive half + conditions -> (log_s, shift).
    pub fn net(&self, passive: &Tensor, cond: &Tensor) -> Result<(Tensor, Tensor)> {
        if cond.rows() != passive.rows() || cond.cols() != self.cond_dim {
            return Err(Error::ShapeMismatch {
                op: "coupling conditioning",
                lhs: cond.shape().to_vec(),
                rhs: vec![passive.rows(), self.cond_dim],
            });
        }
        let h = tensor::conv1d(passive, &self.w1, &self.b1, self.kernel)?;
        let proj = tensor::add_bias(&tensor::matmul(cond, &self.wc)?, &self.bc)?;
        let h = tensor::tanh(&tensor::add(&h, &proj)?);
        let out = tensor::conv1d(&h, &self.w2, &self.b2, self.kernel)?;
        let raw = tensor::slice_cols(&out, 0, self.half)?;
        let shift = tensor::slice_cols(&out, self.half, 2 * self.half)?;
        Ok((self.clamp_log_s(&raw), shift))
    }

    /// `y_active = exp(log_s) .* x_active + shift`; logdet is `sum(log_s)`.
    pub fn forward(&self, x: &Tensor, cond: &Tensor) -> Result<(Tensor, f64)> {
        let (passive, active) = self.split(x)?;
        let (log_s, shift) = self.net(&passive, cond)?;
        let y_active = tensor::add(&tensor::mul(&tensor::exp(&log_s), &active)?, &shift)?;
        let logdet = log_s.data().iter().sum();
        Ok((self.join(&passive, &y_active)?, logdet))
    }

    pub fn inverse(&self, y: &Tensor, cond: &Tensor) -> Result<Tensor> {
        let (passive, y_active) = self.split(y)?;
        let (log_s, shift) = self.net(&passive, cond)?;
        let neg_exp = log_s.map(|v| (-v).exp());
        let active = tensor::mul(&tensor::sub(&y_active, &shift)?, &neg_exp)?;
        self.join(&passive, &active)
    }

    pub fn bind(&self, tape: &mut Tape) -> AffineCouplingVars {
        AffineCouplingVars {
            w1: tape.param(self.w1.clone()),
            b1: tape.param(self.b1.clone()),
            wc: tape.param(self.wc.clone()),
            bc: tape.param(self.bc.clone()),
            w2: tape.param(self.w2.clone()),
            b2: tape.param(self.b2.clone()),
        }
    }

    pub fn forward_on_tape(
        &self,
        tape: &mut Tape,
        x: VarId,
        cond: VarId,
        vars: AffineCouplingVars,
    ) -> Result<(VarId, VarId)> {
        let d = self.channels();
        let (lo, hi) = (
            tape.slice_cols(x, 0, self.half)?,
            tape.slice_cols(x, self.half, d)?,
        );
        let (passive, active) = if self.flip { (hi, lo) } else { (lo, hi) };

        let h = tape.conv1d(passive, vars.w1, vars.b1, self.kernel)?;
        let proj = {
            let p = tape.matmul(cond, vars.wc)?;
            tape.add_bias(p, vars.bc)?
        };
        let h = tape.add(h, proj)?;
        let h = tape.tanh(h);
        let out = tape.conv1d(h, vars.w2, vars.b2, self.kernel)?;
        let raw = tape.slice_cols(out, 0, self.half)?;
        let shift = tape.slice_cols(out, self.half, 2 * self.half)?;
        // clamp * tanh(raw / clamp)
        let log_s = {
            let scaled = tape.scale(raw, 1.0 / self.clamp);
            let t = tape.tanh(scaled);
            tape.scale(t, self.clamp)
        };
        let y_active = {
            let s = tape.exp(log_s);
            let prod = tape.mul(s, active)?;
            tape.add(prod, shift)?
        };
        let y = if self.flip {
            tape.concat_cols(y_active, passive)?
        } else {
            tape.concat_cols(passive, y_active)?
        };
        let logdet = tape.sum(log_s);
        Ok((y, logdet))
    }
}
