//! The trainable artifact: flow stack plus conditioning tables.
//!
//! `VoiceModel` owns the invertible stack and the learned lookup tables for
//! phonemes, accents and (optionally) training speakers. It knows how to turn
//! an utterance into the per-frame conditioning matrix both as plain tensors
//! (inference) and on the tape (training, so gradients reach the tables).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::{
    self, frame_phoneme_ids, ConditionSet, EmbeddingTable, SpeakerEmbedding, SpeakerSource,
    Utterance,
};
use crate::diffcore::tape::{Tape, VarId};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowModel, FlowVars};

/// Where speaker vectors come from during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpeakerMode {
    /// External embeddings (toy encoder centroids or provided vectors).
    /// Keeps conversion, zero-shot and generated voices in one vector space.
    External,
    /// A learned per-speaker lookup table trained with the flow.
    Lookup,
}

/// Full model hyperparameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Feature bins per frame (`d`).
    pub bins: usize,
    /// Flow steps (`K`).
    pub n_steps: usize,
    /// Coupling-net hidden width.
    pub hidden: usize,
    /// Log-scale saturation bound in the couplings.
    pub clamp: f64,
    /// Coupling convolution kernel (odd).
    pub kernel: usize,
    pub phoneme_embed_dim: usize,
    pub accent_embed_dim: usize,
    pub speaker_embed_dim: usize,
    pub n_phonemes: usize,
    pub n_accents: usize,
    /// Training speakers; sizes the lookup table in `Lookup` mode.
    pub n_speakers: usize,
    pub speaker_mode: SpeakerMode,
    /// Whether this model consumes oracle f0/vuv conditioning. Models
    /// trained without it see zeros in those columns at all times.
    pub oracle_f0: bool,
    /// f0 sentence mean over voiced frames only (default: all frames).
    pub f0_mean_over_voiced: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            bins: 8,
            n_steps: 8,
            hidden: 64,
            clamp: 5.0,
            kernel: 3,
            phoneme_embed_dim: 8,
            accent_embed_dim: 8,
            speaker_embed_dim: 256,
            n_phonemes: 12,
            n_accents: 2,
            n_speakers: 8,
            speaker_mode: SpeakerMode::External,
            oracle_f0: true,
            f0_mean_over_voiced: false,
            seed: 42,
        }
    }
}

impl ModelConfig {
    /// Per-frame conditioning width: `[ph | f0 | vuv | speaker | accent]`.
    pub fn cond_dim(&self) -> usize {
        self.phoneme_embed_dim + 2 + self.speaker_embed_dim + self.accent_embed_dim
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            bins: self.bins,
            n_steps: self.n_steps,
            hidden: self.hidden,
            cond_dim: self.cond_dim(),
            clamp: self.clamp,
            kernel: self.kernel,
        }
    }
}

/// Flow plus conditioning tables.
#[derive(Debug, Clone)]
pub struct VoiceModel {
    pub cfg: ModelConfig,
    pub flow: FlowModel,
    pub phoneme_table: EmbeddingTable,
    pub accent_table: EmbeddingTable,
    /// Present only in `Lookup` speaker mode.
    pub speaker_table: Option<EmbeddingTable>,
}

/// Tape handles for the whole model.
pub struct VoiceModelVars {
    pub flow: FlowVars,
    pub phoneme_table: VarId,
    pub accent_table: VarId,
    pub speaker_table: Option<VarId>,
}

/// How the speaker vector enters one training example.
#[derive(Debug, Clone)]
pub enum ExampleSpeaker {
    /// Fixed external vector (toy centroid / provided embedding).
    Vector(SpeakerEmbedding),
    /// Row of the learned speaker table.
    TableIndex(usize),
}

impl VoiceModel {
    pub fn new(cfg: ModelConfig) -> Result<Self> {
        let mut rng = crate::rng::seeded_stream(cfg.seed, 0x6d6f64656c);
        let flow = FlowModel::new(cfg.flow_config(), &mut rng)?;
        let phoneme_table = EmbeddingTable::init(cfg.n_phonemes, cfg.phoneme_embed_dim, 0.3, &mut rng);
        let accent_table = EmbeddingTable::init(cfg.n_accents, cfg.accent_embed_dim, 0.3, &mut rng);
        let speaker_table = match cfg.speaker_mode {
            SpeakerMode::Lookup => Some(EmbeddingTable::init(
                cfg.n_speakers,
                cfg.speaker_embed_dim,
                0.3,
                &mut rng,
            )),
            SpeakerMode::External => None,
        };
        Ok(Self {
            cfg,
            flow,
            phoneme_table,
            accent_table,
            speaker_table,
        })
    }

    /// Assemble the condition set for one utterance (inference path).
    pub fn condition_set(
        &self,
        utt: &Utterance,
        speaker: &ExampleSpeaker,
        use_oracle_f0: bool,
    ) -> Result<ConditionSet> {
        let source = match speaker {
            ExampleSpeaker::Vector(v) => {
                if v.dim() != self.cfg.speaker_embed_dim {
                    return Err(Error::Data(format!(
                        "speaker embedding dim {} != model dim {}",
                        v.dim(),
                        self.cfg.speaker_embed_dim
                    )));
                }
                SpeakerSource::Provided(v)
            }
            ExampleSpeaker::TableIndex(i) => {
                let table = self.speaker_table.as_ref().ok_or_else(|| {
                    Error::Config("speaker table index given but model has no lookup table".into())
                })?;
                SpeakerSource::Lookup { table, index: *i }
            }
        };
        conditioning::build_condition_set(
            utt,
            &self.phoneme_table,
            &self.accent_table,
            source,
            conditioning::CondOptions {
                use_oracle_f0,
                f0_mean_over_voiced: self.cfg.f0_mean_over_voiced,
            },
        )
    }

    pub fn bind(&self, tape: &mut Tape) -> VoiceModelVars {
        VoiceModelVars {
            flow: self.flow.bind(tape),
            phoneme_table: tape.param(self.phoneme_table.tensor().clone()),
            accent_table: tape.param(self.accent_table.tensor().clone()),
            speaker_table: self
                .speaker_table
                .as_ref()
                .map(|t| tape.param(t.tensor().clone())),
        }
    }

    /// Conditioning matrix on the tape so gradients reach the tables.
    pub fn cond_matrix_on_tape(
        &self,
        tape: &mut Tape,
        vars: &VoiceModelVars,
        utt: &Utterance,
        speaker: &ExampleSpeaker,
        use_oracle_f0: bool,
    ) -> Result<VarId> {
        utt.validate()?;
        let t = utt.frames();
        let frame_ids = frame_phoneme_ids(&utt.phoneme_ids, &utt.durations)?;
        let ph = tape.gather_rows(vars.phoneme_table, &frame_ids)?;

        let (f0_vals, vuv_vals) = if use_oracle_f0 {
            let vuv_flags = utt.vuv();
            let norm =
                conditioning::normalize_f0(&utt.f0_hz, &vuv_flags, self.cfg.f0_mean_over_voiced)?;
            let vuv: Vec<f64> = vuv_flags.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
            (norm.values, vuv)
        } else {
            (vec![0.0; t], vec![0.0; t])
        };
        let f0 = tape.leaf(Tensor::new(vec![t, 1], f0_vals)?);
        let vuv = tape.leaf(Tensor::new(vec![t, 1], vuv_vals)?);

        let s_row = match speaker {
            ExampleSpeaker::Vector(v) => {
                tape.leaf(Tensor::new(vec![1, v.dim()], v.values().to_vec())?)
            }
            ExampleSpeaker::TableIndex(i) => {
                let table_var = vars.speaker_table.ok_or_else(|| {
                    Error::Config("speaker table index given but model has no lookup table".into())
                })?;
                tape.gather_rows(table_var, &[*i])?
            }
        };
        let s = tape.broadcast_row(s_row, t)?;
        let a_row = tape.gather_rows(vars.accent_table, &[utt.accent_id])?;
        let a = tape.broadcast_row(a_row, t)?;

        let m = tape.concat_cols(ph, f0)?;
        let m = tape.concat_cols(m, vuv)?;
        let m = tape.concat_cols(m, s)?;
        tape.concat_cols(m, a)
    }

    /// All trainable parameters, tables first, stable order.
    pub fn visit_params(&self, f: &mut dyn FnMut(&str, &Tensor)) {
        f("phoneme_table", self.phoneme_table.tensor());
        f("accent_table", self.accent_table.tensor());
        if let Some(t) = &self.speaker_table {
            f("speaker_table", t.tensor());
        }
        self.flow.visit_params(f);
    }

    pub fn visit_params_mut(&mut self, f: &mut dyn FnMut(&str, &mut Tensor)) {
        f("phoneme_table", self.phoneme_table.tensor_mut());
        f("accent_table", self.accent_table.tensor_mut());
        if let Some(t) = &mut self.speaker_table {
            f("speaker_table", t.tensor_mut());
        }
        self.flow.visit_params_mut(f);
    }

    /// Mutable parameter references, same order as [`visit_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = vec![self.phoneme_table.tensor_mut()];
        out.push(self.accent_table.tensor_mut());
        if let Some(t) = &mut self.speaker_table {
            out.push(t.tensor_mut());
        }
        out.extend(self.flow.params_mut());
        out
    }

    /// Gradients in the order of [`visit_params`].
    pub fn collect_grads(&self, tape: &Tape, vars: &VoiceModelVars) -> Vec<Tensor> {
        let mut out = vec![
            tape.param_grad(vars.phoneme_table),
            tape.param_grad(vars.accent_table),
        ];
        if let Some(sv) = vars.speaker_table {
            out.push(tape.param_grad(sv));
        }
        out.extend(self.flow.collect_grads(tape, &vars.flow));
        out
    }

    /// Snapshot all parameters (for restore-on-abort).
    pub fn snapshot(&self) -> Vec<Tensor> {
        let mut out = Vec::new();
        self.visit_params(&mut |_, t| out.push(t.clone()));
        out
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) {
        let mut i = 0;
        self.visit_params_mut(&mut |_, t| {
            *t = snapshot[i].clone();
            i += 1;
        });
        assert_eq!(i, snapshot.len(), "snapshot length mismatch");
    }

    /// Round every parameter to `f32` precision (what a checkpoint stores).
    pub fn quantize_params_f32(&mut self) {
        self.visit_params_mut(&mut |_, t| *t = t.map(|v| v as f32 as f64));
    }

    /// Scatter flow parameters randomly (tests of random models).
    pub fn randomize_flow<R: Rng + ?Sized>(&mut self, std: f64, rng: &mut R) -> Result<()> {
        self.flow.randomize(std, rng)
    }
}
