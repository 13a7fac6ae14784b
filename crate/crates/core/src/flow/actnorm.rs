//! Per-channel affine normalization with data-dependent initialization.
//!
//! The scale is kept in log space so it can never reach zero and the
//! log-determinant is a plain sum. A fresh layer is the identity until
//! either training data initializes it or explicit values are set.

use crate::diffcore::tape::{Tape, VarId};
use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ActNorm {
    /// log of the per-channel scale.
    pub log_scale: Tensor,
    pub bias: Tensor,
    pub initialized: bool,
}

/// Tape handles for this layer's parameters.
#[derive(Debug, Clone, Copy)]
pub struct ActNormVars {
    pub log_scale: VarId,
    pub bias: VarId,
}

impl ActNorm {
    /// Identity layer: scale 1, bias 0, awaiting data-dependent init.
    pub fn new(channels: usize) -> Self {
        Self {
            log_scale: Tensor::zeros(&[channels]),
            bias: Tensor::zeros(&[channels]),
            initialized: false,
        }
    }

    /// Explicit scale/bias. Scales must be strictly positive; a zero scale
    /// would make the layer non-invertible and is rejected.
    pub fn from_scale_bias(scale: &[f64], bias: &[f64]) -> Result<Self> {
        if scale.len() != bias.len() {
            return Err(Error::ShapeMismatch {
                op: "actnorm",
                lhs: vec![scale.len()],
                rhs: vec![bias.len()],
            });
        }
        if scale.iter().any(|&s| !s.is_finite() || s <= 0.0) {
            return Err(Error::Data(
                "actnorm scale must be finite and > 0 (zero scale is singular)".into(),
            ));
        }
        Ok(Self {
            log_scale: Tensor::new(vec![scale.len()], scale.iter().map(|s| s.ln()).collect())?,
            bias: Tensor::new(vec![bias.len()], bias.to_vec())?,
            initialized: true,
        })
    }

    pub fn channels(&self) -> usize {
        self.log_scale.numel()
    }

    /// Set scale/bias so this batch comes out with per-channel mean 0, std 1.
    pub fn init_from_data(&mut self, x: &Tensor) -> Result<()> {
        let (t, d) = (x.rows(), x.cols());
        if d != self.channels() {
            return Err(Error::ShapeMismatch {
                op: "actnorm init",
                lhs: x.shape().to_vec(),
                rhs: vec![self.channels()],
            });
        }
        for c in 0..d {
            let mut mean = 0.0;
            for i in 0..t {
                mean += x.get2(i, c);
            }
            mean /= t as f64;
            let mut var = 0.0;
            for i in 0..t {
                let dvi = x.get2(i, c) - mean;
                var += dvi * dvi;
            }
            var /= t as f64;
            let std = var.sqrt().max(1e-6);
            self.log_scale.data_mut()[c] = -std.ln();
            self.bias.data_mut()[c] = -mean / std;
        }
        self.initialized = true;
        Ok(())
    }

    /// `y = s .* x + b` per channel; logdet is `t * sum(log s)`.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, f64)> {
        let scale = tensor::exp(&self.log_scale);
        let y = tensor::add_bias(&tensor::mul_channels(x, &scale)?, &self.bias)?;
        let logdet = x.rows() as f64 * self.log_scale.data().iter().sum::<f64>();
        Ok((y, logdet))
    }

    pub fn inverse(&self, y: &Tensor) -> Result<Tensor> {
        let inv_scale = self.log_scale.map(|v| (-v).exp());
        let neg_bias = tensor::scale(&self.bias, -1.0);
        tensor::mul_channels(&tensor::add_bias(y, &neg_bias)?, &inv_scale)
    }

    pub fn bind(&self, tape: &mut Tape) -> ActNormVars {
        ActNormVars {
            log_scale: tape.param(self.log_scale.clone()),
            bias: tape.param(self.bias.clone()),
        }
    }

    /// Recorded forward; returns `(y, logdet)` as tape vars.
    pub fn forward_on_tape(&self, tape: &mut Tape, x: VarId, vars: ActNormVars) -> Result<(VarId, VarId)> {
        let t = tape.value(x).rows() as f64;
        let scale = tape.exp(vars.log_scale);
        let scaled = tape.mul_channels(x, scale)?;
        let y = tape.add_bias(scaled, vars.bias)?;
        let ls_sum = tape.sum(vars.log_scale);
        let logdet = tape.scale(ls_sum, t);
        Ok((y, logdet))
    }
}
