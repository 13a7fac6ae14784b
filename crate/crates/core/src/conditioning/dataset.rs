//! On-disk dataset container.
//!
//! A dataset directory holds `manifest.json` plus one tensor binary per
//! utterance feature. Tensor binaries are little-endian with the layout
//!
//! ```text
//! u32 ndim | u32 dim[0] .. dim[ndim-1] | f32 data, row-major
//! ```
//!
//! Mel matrices are rank 2 (`t x d`), f0 contours rank 1 (`t`). Values are
//! stored at 32-bit precision; loading widens to `f64`.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{MelTensor, Utterance};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhonemeDef {
    pub name: String,
    pub voiced: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeakerDef {
    pub id: String,
    pub locale: String,
}

/// Which partition an utterance belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Eval,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UtteranceEntry {
    pub id: String,
    pub speaker: String,
    /// Accent/locale name of the utterance.
    pub accent: String,
    pub split: Split,
    pub phonemes: Vec<String>,
    pub durations: Vec<u32>,
    pub frames: u32,
    pub mel_file: String,
    pub f0_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    /// Feature bins per frame (`d`).
    pub feature_bins: u32,
    pub locales: Vec<String>,
    pub phoneme_inventory: Vec<PhonemeDef>,
    pub speakers: Vec<SpeakerDef>,
    pub utterances: Vec<UtteranceEntry>,
}

impl Manifest {
    pub fn phoneme_index(&self, name: &str) -> Result<usize> {
        self.phoneme_inventory
            .iter()
            .position(|p| p.name == name)
            .ok_or_else(|| Error::Data(format!("unknown phoneme '{name}' in manifest")))
    }

    pub fn speaker(&self, id: &str) -> Result<&SpeakerDef> {
        self.speakers
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::Data(format!("unknown speaker '{id}'")))
    }

    /// Locale index doubles as the accent id of the speaker's utterances.
    pub fn locale_index(&self, locale: &str) -> Result<usize> {
        self.locales
            .iter()
            .position(|l| l == locale)
            .ok_or_else(|| Error::Data(format!("unknown locale '{locale}'")))
    }
}

/// A dataset rooted at a directory, manifest loaded.
#[derive(Debug, Clone)]
pub struct Dataset {
    root: PathBuf,
    pub manifest: Manifest,
}

impl Dataset {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let text = fs::read_to_string(root.join(MANIFEST_FILE))
            .map_err(|e| Error::Data(format!("cannot read manifest in {}: {e}", root.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "manifest version {} unsupported (expected {})",
                manifest.format_version, MANIFEST_VERSION
            )));
        }
        Ok(Self { root, manifest })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Write a manifest (creating the directory) and return the dataset.
    pub fn create(root: impl AsRef<Path>, manifest: Manifest) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let text = serde_json::to_string_pretty(&manifest)?;
        fs::write(root.join(MANIFEST_FILE), text)?;
        Ok(Self { root, manifest })
    }

    pub fn entries(&self, split: Option<Split>) -> impl Iterator<Item = &UtteranceEntry> {
        self.manifest
            .utterances
            .iter()
            .filter(move |u| split.is_none_or(|s| u.split == s))
    }

    pub fn entry(&self, id: &str) -> Result<&UtteranceEntry> {
        self.manifest
            .utterances
            .iter()
            .find(|u| u.id == id)
            .ok_or_else(|| Error::Data(format!("unknown utterance '{id}'")))
    }

    /// Load one utterance with its mel and f0 tensors.
    pub fn load_utterance(&self, entry: &UtteranceEntry) -> Result<Utterance> {
        let mel = read_tensor_f32(self.root.join(&entry.mel_file))?;
        let f0 = read_tensor_f32(self.root.join(&entry.f0_file))?;
        if f0.shape().len() != 1 {
            return Err(Error::Format(format!(
                "f0 tensor for '{}' must be rank 1, got {:?}",
                entry.id,
                f0.shape()
            )));
        }
        let accent_id = self.manifest.locale_index(&entry.accent)?;
        self.manifest.speaker(&entry.speaker)?;
        let phoneme_ids = entry
            .phonemes
            .iter()
            .map(|p| self.manifest.phoneme_index(p))
            .collect::<Result<Vec<_>>>()?;
        let utt = Utterance {
            id: entry.id.clone(),
            speaker_id: entry.speaker.clone(),
            accent_id,
            phoneme_ids,
            durations: entry.durations.iter().map(|&d| d as usize).collect(),
            f0_hz: f0.data().to_vec(),
            mel: Some(MelTensor::from_tensor(mel)?),
        };
        utt.validate()?;
        Ok(utt)
    }

    pub fn write_utterance_tensors(&self, entry: &UtteranceEntry, mel: &Tensor, f0: &Tensor) -> Result<()> {
        write_tensor_f32(self.root.join(&entry.mel_file), mel)?;
        write_tensor_f32(self.root.join(&entry.f0_file), f0)
    }
}

/// Serialize a tensor in the container's binary layout.
pub fn write_tensor_f32(path: impl AsRef<Path>, tensor: &Tensor) -> Result<()> {
    if let Some(parent) = path.as_ref().parent() {
        fs::create_dir_all(parent)?;
    }
    let mut buf: Vec<u8> = Vec::with_capacity(4 + 4 * tensor.shape().len() + 4 * tensor.numel());
    buf.extend_from_slice(&(tensor.shape().len() as u32).to_le_bytes());
    for &dim in tensor.shape() {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    for &v in tensor.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Load a tensor from the container's binary layout.
pub fn read_tensor_f32(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path.as_ref())
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.as_ref().display())))?
        .read_to_end(&mut bytes)?;
    let mut off = 0usize;
    let take_u32 = |bytes: &[u8], off: &mut usize| -> Result<u32> {
        if *off + 4 > bytes.len() {
            return Err(Error::Format("tensor file truncated".into()));
        }
        let v = u32::from_le_bytes(bytes[*off..*off + 4].try_into().unwrap());
        *off += 4;
        Ok(v)
    };
    let ndim = take_u32(&bytes, &mut off)? as usize;
    if ndim == 0 || ndim > 4 {
        return Err(Error::Format(format!("tensor rank {ndim} out of range")));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(take_u32(&bytes, &mut off)? as usize);
    }
    let numel: usize = shape.iter().product();
    if bytes.len() != off + 4 * numel {
        return Err(Error::Format(format!(
            "tensor file length {} != expected {}",
            bytes.len(),
            off + 4 * numel
        )));
    }
    let mut data = Vec::with_capacity(numel);
    for i in 0..numel {
        let v = f32::from_le_bytes(bytes[off + 4 * i..off + 4 * i + 4].try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite("tensor file contains NaN/Inf".into()));
        }
        data.push(v as f64);
    }
    Tensor::new(shape, data)
}

/// Round every value to `f32` precision, as the container will store it.
pub fn quantize_f32(t: &Tensor) -> Tensor {
    t.map(|v| v as f32 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn tensor_file_roundtrip_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.bin");
        let t = quantize_f32(&Tensor::randn(&[5, 3], 1.0, &mut rng::seeded(3)));
        write_tensor_f32(&path, &t).unwrap();
        let back = read_tensor_f32(&path).unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.bin");
        std::fs::write(&path, [2u8, 0, 0, 0, 3, 0]).unwrap();
        assert!(read_tensor_f32(&path).is_err());
    }

    #[test]
    fn nan_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nan.bin");
        let mut buf = Vec::new();
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&path, buf).unwrap();
        match read_tensor_f32(&path) {
            Err(Error::NonFinite(_)) => {}
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn manifest_version_checked() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = Manifest {
            format_version: 99,
            feature_bins: 8,
            locales: vec![],
            phoneme_inventory: vec![],
            speakers: vec![],
            utterances: vec![],
        };
        std::fs::write(
            dir.path().join(MANIFEST_FILE),
            serde_json::to_string(&manifest).unwrap(),
        )
        .unwrap();
        match Dataset::open(dir.path()) {
            Err(Error::Format(_)) => {}
            other => panic!("expected Format error, got {other:?}"),
        }
    }
}
