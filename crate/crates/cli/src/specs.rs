//! JSON request/config formats consumed by the subcommands.

use serde::{Deserialize, Serialize};

use nfvc_core::error::{Error, Result};
use nfvc_core::flow::TrainConfig;
use nfvc_core::model::ModelConfig;
use nfvc_core::speakergen::SpeakerGenTrainConfig;

/// Training run configuration. `model.bins`, `model.n_phonemes`,
/// `model.n_accents` and `model.n_speakers` are always taken from the
/// dataset; values given here for those fields are ignored.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSpec {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub speakergen: SpeakerGenTrainConfig,
    /// Train the speaker generator after the flow (requires >= 2 speakers
    /// per locale).
    pub fit_speaker_generator: bool,
    /// Seed of the fixed toy-encoder projection.
    pub proj_seed: u64,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            speakergen: SpeakerGenTrainConfig::default(),
            fit_speaker_generator: true,
            proj_seed: 1234,
        }
    }
}

/// Where a synthesis request takes its speaker embedding from. Exactly one
/// of the three sources must be given.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeakerRef {
    /// A training speaker id, resolved against the checkpoint's stored
    /// reference embeddings (or its lookup table in lookup mode).
    pub id: Option<String>,
    /// An explicit embedding vector (zero-shot / new-voice path).
    pub values: Option<Vec<f64>>,
    /// A voices JSON file produced by `gen-speakers`, plus the id of the
    /// voice to use from it.
    pub voices_file: Option<String>,
    pub voice_id: Option<String>,
}

/// A synthesis request: what to say, for how long, and as whom.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtteranceSpec {
    pub phonemes: Vec<String>,
    pub durations: Vec<u32>,
    /// Oracle per-frame f0 in Hz (0 = unvoiced); required by `with f0`
    /// profiles, ignored otherwise.
    #[serde(default)]
    pub f0_hz: Option<Vec<f64>>,
    /// Locale/accent name, e.g. `loc0`.
    pub accent: String,
    pub speaker: SpeakerRef,
}

/// Read a JSON file, mapping failures to configuration errors so the
/// offending file and key surface in the message.
pub fn read_config<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}
