//! Maximum-likelihood training: minimize the mean per-element NLL over the
//! training utterances with per-utterance optimizer steps.

use serde::{Deserialize, Serialize};

use crate::conditioning::frame_condition_matrix;
use crate::diffcore::optim::{Adam, AdamConfig, StepOutcome};
use crate::diffcore::tape::Tape;
use crate::error::{Error, Result};
use crate::model::{ExampleSpeaker, VoiceModel};
use crate::rng;

use rand::seq::SliceRandom;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: AdamConfig,
    pub epochs: usize,
    pub seed: u64,
    /// Utterances used for the data-dependent actnorm initialization.
    pub init_utterances: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: AdamConfig::default(),
            epochs: 30,
            seed: 7,
            init_utterances: 16,
        }
    }
}

/// One training example: a labeled utterance plus its speaker source.
#[derive(Debug, Clone)]
pub struct TrainExample {
    pub utterance: crate::conditioning::Utterance,
    pub speaker: ExampleSpeaker,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingReport {
    /// Mean per-element NLL after initialization, before any gradient step.
    pub initial_nll: f64,
    /// Mean per-element NLL per epoch (losses observed during the epoch).
    pub epoch_nll: Vec<f64>,
    pub optimizer_steps: u64,
    pub skipped_steps: u64,
}

/// Mean per-element NLL of the model over a set of examples (no updates).
pub fn mean_nll(model: &VoiceModel, examples: &[TrainExample]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Data("cannot evaluate NLL on an empty set".into()));
    }
    let mut acc = 0.0;
    for ex in examples {
        let mel = ex
            .utterance
            .mel
            .as_ref()
            .ok_or_else(|| Error::Data(format!("utterance {} has no features", ex.utterance.id)))?;
        let cond = model.condition_set(&ex.utterance, &ex.speaker, model.cfg.oracle_f0)?;
        let cm = frame_condition_matrix(&cond)?;
        acc += model.flow.nll(mel, &cm)?.per_element;
    }
    Ok(acc / examples.len() as f64)
}

/// State handed to the per-epoch callback of [`train_with`].
pub struct EpochSnapshot<'a> {
    pub epoch: usize,
    pub mean_nll: f64,
    pub model: &'a VoiceModel,
    pub optimizer: &'a Adam,
}

/// Train in place. Deterministic given `(model, examples, cfg, optimizer)`.
///
/// Aborts on a non-finite loss, restoring the parameters to the end of the
/// last completed epoch. Non-finite gradients are skipped and counted; the
/// loss value itself must stay finite.
pub fn train(
    model: &mut VoiceModel,
    examples: &[TrainExample],
    cfg: &TrainConfig,
    optimizer: &mut Adam,
) -> Result<TrainingReport> {
    train_with(model, examples, cfg, optimizer, |_| Ok(()))
}

/// [`train`] with a callback after every completed epoch (checkpointing,
/// progress logging).
pub fn train_with(
    model: &mut VoiceModel,
    examples: &[TrainExample],
    cfg: &TrainConfig,
    optimizer: &mut Adam,
    mut on_epoch: impl FnMut(&EpochSnapshot<'_>) -> Result<()>,
) -> Result<TrainingReport> {
    if examples.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let bins = model.cfg.bins;
    for ex in examples {
        let mel = ex
            .utterance
            .mel
            .as_ref()
            .ok_or_else(|| Error::Data(format!("utterance {} has no features", ex.utterance.id)))?;
        if mel.bins() != bins {
            return Err(Error::ShapeMismatch {
                op: "train",
                lhs: vec![mel.frames(), mel.bins()],
                rhs: vec![bins],
            });
        }
    }

    if !model.flow.actnorms_initialized() {
        let n_init = cfg.init_utterances.max(1).min(examples.len());
        let mut mats = Vec::with_capacity(n_init);
        for ex in &examples[..n_init] {
            let cond = model.condition_set(&ex.utterance, &ex.speaker, model.cfg.oracle_f0)?;
            mats.push((ex.utterance.mel.clone().unwrap(), frame_condition_matrix(&cond)?));
        }
        let batch: Vec<_> = mats.iter().map(|(m, c)| (m, c)).collect();
        model.flow.init_actnorms(&batch)?;
    }

    let initial_nll = mean_nll(model, examples)?;
    let mut report = TrainingReport {
        initial_nll,
        epoch_nll: Vec::with_capacity(cfg.epochs),
        optimizer_steps: 0,
        skipped_steps: 0,
    };

    let mut last_good = model.snapshot();
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng = rng::seeded_stream(cfg.seed, epoch as u64 + 1);
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;

        for (step_idx, &i) in order.iter().enumerate() {
            let ex = &examples[i];
            let mel = ex.utterance.mel.as_ref().unwrap();

            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let cond = model.cond_matrix_on_tape(
                &mut tape,
                &vars,
                &ex.utterance,
                &ex.speaker,
                model.cfg.oracle_f0,
            )?;
            let x = tape.leaf(mel.tensor().clone());
            let loss = model.flow.nll_on_tape(&mut tape, x, cond, &vars.flow)?;
            let loss_val = tape.value(loss).item();
            if !loss_val.is_finite() {
                model.restore(&last_good);
                return Err(Error::TrainAborted {
                    epoch,
                    step: step_idx,
                });
            }
            epoch_loss += loss_val;

            tape.backward(loss)?;
            let grads = model.collect_grads(&tape, &vars);
            let mut params = model.params_mut();
            match optimizer.step(&mut params, &grads) {
                StepOutcome::Applied => report.optimizer_steps += 1,
                StepOutcome::SkippedNonFinite => report.skipped_steps += 1,
            }
        }
        let mean_nll = epoch_loss / examples.len() as f64;
        report.epoch_nll.push(mean_nll);
        last_good = model.snapshot();
        on_epoch(&EpochSnapshot {
            epoch,
            mean_nll,
            model,
            optimizer,
        })?;
    }
    Ok(report)
}
