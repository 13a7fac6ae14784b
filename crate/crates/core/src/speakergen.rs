//! New-voice generation.
//!
//! A feed-forward network (two hidden layers of 256) maps a learned locale
//! embedding to per-dimension Gaussian-mixture parameters over the speaker
//! embedding space: 10 components per dimension, each with weight, mean and
//! stddev. Training maximizes the mixture log-likelihood of the known
//! speaker-embedding pool, per dimension. Sampling draws every embedding
//! dimension independently from its mixture.
//!
//! Weights come out of a softmax and stddevs out of a softplus plus a floor,
//! so the simplex and positivity invariants hold by construction.

use serde::{Deserialize, Serialize};

use crate::conditioning::{EmbeddingTable, SpeakerEmbedding};
use crate::diffcore::optim::{Adam, AdamConfig, StepOutcome};
use crate::diffcore::tape::{Tape, VarId};
use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};
use crate::flow::LN_TAU;
use crate::rng;

/// Lower bound on mixture stddevs; prevents component collapse.
pub const STDDEV_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerGenConfig {
    pub locale_embed_dim: usize,
    pub hidden: usize,
    pub n_components: usize,
    /// Speaker embedding dimensionality this generator emits.
    pub embed_dim: usize,
    pub n_locales: usize,
    pub seed: u64,
}

impl Default for SpeakerGenConfig {
    fn default() -> Self {
        Self {
            locale_embed_dim: 8,
            hidden: 256,
            n_components: 10,
            embed_dim: 256,
            n_locales: 2,
            seed: 17,
        }
    }
}

/// Per-dimension mixture parameters.
#[derive(Debug, Clone)]
pub struct GmmDim {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stddevs: Vec<f64>,
}

/// Mixture parameters for every embedding dimension.
#[derive(Debug, Clone)]
pub struct GmmSpec {
    pub dims: Vec<GmmDim>,
}

impl GmmSpec {
    pub fn embed_dim(&self) -> usize {
        self.dims.len()
    }

    pub fn n_components(&self) -> usize {
        self.dims.first().map_or(0, |d| d.weights.len())
    }

    pub fn validate(&self) -> Result<()> {
        for (i, d) in self.dims.iter().enumerate() {
            let k = d.weights.len();
            if d.means.len() != k || d.stddevs.len() != k || k == 0 {
                return Err(Error::Data(format!("gmm dim {i}: inconsistent component counts")));
            }
            let sum: f64 = d.weights.iter().sum();
            if d.weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::Data(format!(
                    "gmm dim {i}: weights must be a simplex (sum {sum})"
                )));
            }
            if d.stddevs.iter().any(|&s| s < STDDEV_FLOOR * (1.0 - 1e-12)) {
                return Err(Error::Data(format!("gmm dim {i}: stddev below floor")));
            }
            if d.means.iter().any(|m| !m.is_finite()) || d.stddevs.iter().any(|s| !s.is_finite()) {
                return Err(Error::NonFinite(format!("gmm dim {i}: non-finite parameter")));
            }
        }
        Ok(())
    }

    /// Draw one embedding: per dimension, pick a component by weight, then
    /// draw from its normal. Deterministic per seed.
    pub fn sample(&self, seed: u64) -> SpeakerEmbedding {
        let mut r = rng::seeded_stream(seed, 0x73616d70);
        let values = self
            .dims
            .iter()
            .map(|d| {
                let u: f64 = rand::Rng::random(&mut r);
                let mut acc = 0.0;
                let mut pick = d.weights.len() - 1;
                for (k, &w) in d.weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = k;
                        break;
                    }
                }
                d.means[pick] + d.stddevs[pick] * rng::standard_normal(&mut r)
            })
            .collect();
        SpeakerEmbedding::new(values).expect("finite by construction")
    }
}

/// A generated voice ready for JSON export.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportedVoice {
    pub id: String,
    pub locale: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerGenTrainConfig {
    pub optimizer: AdamConfig,
    pub epochs: usize,
}

impl Default for SpeakerGenTrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamConfig {
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            epochs: 400,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerGenReport {
    /// Mean per-dimension log-likelihood of the pool before training.
    pub initial_loglik: f64,
    /// Mean per-dimension log-likelihood per epoch.
    pub epoch_loglik: Vec<f64>,
    /// True iff the weight simplex held after every optimizer step.
    pub simplex_held: bool,
    pub skipped_steps: u64,
}

/// The locale-conditioned mixture-parameter network.
#[derive(Debug, Clone)]
pub struct SpeakerGenerator {
    pub cfg: SpeakerGenConfig,
    pub locale_table: EmbeddingTable,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
    pub w3: Tensor,
    pub b3: Tensor,
}

struct GenVars {
    locale_table: VarId,
    w1: VarId,
    b1: VarId,
    w2: VarId,
    b2: VarId,
    w3: VarId,
    b3: VarId,
}

/// Tape vars of the sliced mixture parameters for one locale.
struct SpecVars {
    log_weights: VarId,
    means: VarId,
    stddevs: VarId,
}

impl SpeakerGenerator {
    pub fn new(cfg: SpeakerGenConfig) -> Self {
        let mut r = rng::seeded_stream(cfg.seed, 0x7367656e);
        let (ld, h) = (cfg.locale_embed_dim, cfg.hidden);
        let out = cfg.embed_dim * 3 * cfg.n_components;
        Self {
            locale_table: EmbeddingTable::init(cfg.n_locales, ld, 0.5, &mut r),
            cfg,
            w1: Tensor::randn(&[ld, h], 1.0 / (ld as f64).sqrt(), &mut r),
            b1: Tensor::zeros(&[h]),
            w2: Tensor::randn(&[h, h], 1.0 / (h as f64).sqrt(), &mut r),
            b2: Tensor::zeros(&[h]),
            // Zero-initialized head: the initial mixture is uniform weights,
            // zero means, softplus(0)+floor stddev for every locale.
            w3: Tensor::zeros(&[h, out]),
            b3: Tensor::zeros(&[out]),
        }
    }

    fn check_locale(&self, locale: usize) -> Result<()> {
        if locale >= self.cfg.n_locales {
            return Err(Error::Data(format!(
                "unknown locale id {locale} (generator has {})",
                self.cfg.n_locales
            )));
        }
        Ok(())
    }

    /// Emit the mixture parameters for one locale.
    pub fn forward(&self, locale: usize) -> Result<GmmSpec> {
        self.check_locale(locale)?;
        let (e, k) = (self.cfg.embed_dim, self.cfg.n_components);
        let x = Tensor::new(vec![1, self.cfg.locale_embed_dim], self.locale_table.row(locale)?)?;
        let h1 = tensor::tanh(&tensor::add_bias(&tensor::matmul(&x, &self.w1)?, &self.b1)?);
        let h2 = tensor::tanh(&tensor::add_bias(&tensor::matmul(&h1, &self.w2)?, &self.b2)?);
        let out = tensor::add_bias(&tensor::matmul(&h2, &self.w3)?, &self.b3)?;
        let grid = out.reshaped(&[e, 3 * k])?;
        let logits = tensor::slice_cols(&grid, 0, k)?;
        let means = tensor::slice_cols(&grid, k, 2 * k)?;
        let raw_std = tensor::slice_cols(&grid, 2 * k, 3 * k)?;

        let dims = (0..e)
            .map(|i| {
                let row: Vec<f64> = (0..k).map(|j| logits.get2(i, j)).collect();
                let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                let exps: Vec<f64> = row.iter().map(|v| (v - mx).exp()).collect();
                let z: f64 = exps.iter().sum();
                GmmDim {
                    weights: exps.iter().map(|v| v / z).collect(),
                    means: (0..k).map(|j| means.get2(i, j)).collect(),
                    stddevs: (0..k)
                        .map(|j| tensor::softplus_scalar(raw_std.get2(i, j)) + STDDEV_FLOOR)
                        .collect(),
                }
            })
            .collect();
        let spec = GmmSpec { dims };
        spec.validate()?;
        Ok(spec)
    }

    fn bind(&self, tape: &mut Tape) -> GenVars {
        GenVars {
            locale_table: tape.param(self.locale_table.tensor().clone()),
            w1: tape.param(self.w1.clone()),
            b1: tape.param(self.b1.clone()),
            w2: tape.param(self.w2.clone()),
            b2: tape.param(self.b2.clone()),
            w3: tape.param(self.w3.clone()),
            b3: tape.param(self.b3.clone()),
        }
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![
            self.locale_table.tensor_mut(),
            &mut self.w1,
            &mut self.b1,
            &mut self.w2,
            &mut self.b2,
            &mut self.w3,
            &mut self.b3,
        ]
    }

    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("locale_table", self.locale_table.tensor());
        f("w1", &self.w1);
        f("b1", &self.b1);
        f("w2", &self.w2);
        f("b2", &self.b2);
        f("w3", &self.w3);
        f("b3", &self.b3);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("locale_table", self.locale_table.tensor_mut());
        f("w1", &mut self.w1);
        f("b1", &mut self.b1);
        f("w2", &mut self.w2);
        f("b2", &mut self.b2);
        f("w3", &mut self.w3);
        f("b3", &mut self.b3);
    }

    /// Net forward on the tape, returning the sliced mixture parameter vars.
    fn spec_on_tape(&self, tape: &mut Tape, vars: &GenVars, locale: usize) -> Result<SpecVars> {
        let (e, k) = (self.cfg.embed_dim, self.cfg.n_components);
        let x = tape.gather_rows(vars.locale_table, &[locale])?;
        let h1 = {
            let m = tape.matmul(x, vars.w1)?;
            let m = tape.add_bias(m, vars.b1)?;
            tape.tanh(m)
        };
        let h2 = {
            let m = tape.matmul(h1, vars.w2)?;
            let m = tape.add_bias(m, vars.b2)?;
            tape.tanh(m)
        };
        let out = {
            let m = tape.matmul(h2, vars.w3)?;
            tape.add_bias(m, vars.b3)?
        };
        let grid = tape.reshape(out, &[e, 3 * k])?;
        let logits = tape.slice_cols(grid, 0, k)?;
        let means = tape.slice_cols(grid, k, 2 * k)?;
        let raw_std = tape.slice_cols(grid, 2 * k, 3 * k)?;
        let stddevs = {
            let sp = tape.softplus(raw_std);
            tape.add_scalar(sp, STDDEV_FLOOR)
        };
        let log_weights = {
            let lse = logsumexp_rows(tape, logits)?;
            let lse_b = tape.broadcast_cols(lse, k)?;
            tape.sub(logits, lse_b)?
        };
        Ok(SpecVars {
            log_weights,
            means,
            stddevs,
        })
    }

    /// Mean per-dimension log-likelihood of `members` under one locale's
    /// mixture, as a tape var.
    fn pool_loglik_on_tape(
        &self,
        tape: &mut Tape,
        spec: &SpecVars,
        members: &[&SpeakerEmbedding],
    ) -> Result<VarId> {
        let (e, k) = (self.cfg.embed_dim, self.cfg.n_components);
        let mut total: Option<VarId> = None;
        for m in members {
            let col = tape.leaf(Tensor::new(vec![e, 1], m.values().to_vec())?);
            let x = tape.broadcast_cols(col, k)?;
            let diff = tape.sub(x, spec.means)?;
            let zn = tape.div(diff, spec.stddevs)?;
            let sq = tape.mul(zn, zn)?;
            let t1 = tape.scale(sq, -0.5);
            let ln_sigma = tape.ln(spec.stddevs);
            let t2 = tape.sub(t1, ln_sigma)?;
            let log_normal = tape.add_scalar(t2, -0.5 * LN_TAU);
            let joint = tape.add(spec.log_weights, log_normal)?;
            let per_dim = logsumexp_rows(tape, joint)?;
            let member_ll = tape.sum(per_dim);
            total = Some(match total {
                Some(acc) => tape.add(acc, member_ll)?,
                None => member_ll,
            });
        }
        let total = total.ok_or_else(|| Error::Data("empty pool for locale".into()))?;
        Ok(tape.scale(total, 1.0 / (members.len() * e) as f64))
    }

    /// Mean per-dimension log-likelihood over the whole pool (no updates).
    pub fn pool_loglik(&self, pool: &[(usize, SpeakerEmbedding)]) -> Result<f64> {
        let by_locale = group_pool(pool, self.cfg.n_locales, self.cfg.embed_dim)?;
        let mut acc = 0.0;
        let mut n = 0usize;
        for (locale, members) in by_locale.iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let mut tape = Tape::new();
            let vars = self.bind(&mut tape);
            let spec = self.spec_on_tape(&mut tape, &vars, locale)?;
            let refs: Vec<&SpeakerEmbedding> = members.to_vec();
            let ll = self.pool_loglik_on_tape(&mut tape, &spec, &refs)?;
            acc += tape.value(ll).item() * members.len() as f64;
            n += members.len();
        }
        Ok(acc / n as f64)
    }

    /// Fit the generator to the pool by maximum mixture likelihood.
    ///
    /// Requires at least two speakers in every locale that appears.
    pub fn train(
        &mut self,
        pool: &[(usize, SpeakerEmbedding)],
        cfg: &SpeakerGenTrainConfig,
    ) -> Result<SpeakerGenReport> {
        let by_locale = group_pool(pool, self.cfg.n_locales, self.cfg.embed_dim)?;
        if by_locale.iter().all(|m| m.is_empty()) {
            return Err(Error::Data("speaker pool is empty".into()));
        }
        for (locale, members) in by_locale.iter().enumerate() {
            if members.len() == 1 {
                return Err(Error::Data(format!(
                    "locale {locale} has a single speaker; need >= 2 per locale"
                )));
            }
        }

        let mut opt = Adam::new(cfg.optimizer.clone());
        let mut report = SpeakerGenReport {
            initial_loglik: self.pool_loglik(pool)?,
            epoch_loglik: Vec::with_capacity(cfg.epochs),
            simplex_held: true,
            skipped_steps: 0,
        };
        for _epoch in 0..cfg.epochs {
            let mut epoch_ll = 0.0;
            let mut n = 0usize;
            for (locale, members) in by_locale.iter().enumerate() {
                if members.is_empty() {
                    continue;
                }
                let mut tape = Tape::new();
                let vars = self.bind(&mut tape);
                let spec = self.spec_on_tape(&mut tape, &vars, locale)?;
                let refs: Vec<&SpeakerEmbedding> = members.to_vec();
                let ll = self.pool_loglik_on_tape(&mut tape, &spec, &refs)?;
                epoch_ll += tape.value(ll).item() * members.len() as f64;
                n += members.len();
                let loss = tape.scale(ll, -1.0);
                tape.backward(loss)?;
                let grads = vec![
                    tape.param_grad(vars.locale_table),
                    tape.param_grad(vars.w1),
                    tape.param_grad(vars.b1),
                    tape.param_grad(vars.w2),
                    tape.param_grad(vars.b2),
                    tape.param_grad(vars.w3),
                    tape.param_grad(vars.b3),
                ];
                let mut params = self.params_mut();
                match opt.step(&mut params, &grads) {
                    StepOutcome::Applied => {}
                    StepOutcome::SkippedNonFinite => report.skipped_steps += 1,
                }
                // Simplex invariant after every step, on every locale's spec.
                if self.forward(locale).is_err() {
                    report.simplex_held = false;
                }
            }
            report.epoch_loglik.push(epoch_ll / n as f64);
        }
        Ok(report)
    }
}

/// `log(sum(exp(row)))` per row with the usual max shift; the shift enters
/// as a constant, which leaves the softmax gradient intact.
fn logsumexp_rows(tape: &mut Tape, a: VarId) -> Result<VarId> {
    let v = tape.value(a);
    let (r, c) = (v.rows(), v.cols());
    let mut mx = vec![f64::NEG_INFINITY; r];
    for i in 0..r {
        for j in 0..c {
            mx[i] = mx[i].max(v.get2(i, j));
        }
    }
    let mx = tape.leaf(Tensor::new(vec![r, 1], mx)?);
    let mxb = tape.broadcast_cols(mx, c)?;
    let shifted = tape.sub(a, mxb)?;
    let e = tape.exp(shifted);
    let s = tape.row_sums(e);
    let l = tape.ln(s);
    tape.add(l, mx)
}

fn group_pool(
    pool: &[(usize, SpeakerEmbedding)],
    n_locales: usize,
    embed_dim: usize,
) -> Result<Vec<Vec<&SpeakerEmbedding>>> {
    let mut by_locale: Vec<Vec<&SpeakerEmbedding>> = vec![Vec::new(); n_locales];
    for (locale, emb) in pool {
        if *locale >= n_locales {
            return Err(Error::Data(format!("pool locale {locale} out of range")));
        }
        if emb.dim() != embed_dim {
            return Err(Error::Data(format!(
                "pool embedding dim {} != generator dim {embed_dim}",
                emb.dim()
            )));
        }
        by_locale[*locale].push(emb);
    }
    Ok(by_locale)
}
