//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "NFVC" | u32 version | u64 meta_len | meta JSON
//! u32 n_tensors
//!   per tensor: u32 name_len | name utf-8 | u32 ndim | u32 dims... | u64 offset
//! u64 blob_len | raw f32 blob
//! ```
//!
//! Offsets index into the blob section. Parameters are stored at 32-bit
//! precision; loading widens to f64, so save -> load -> save is
//! byte-idempotent and inference outputs from a loaded model are
//! bit-reproducible.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::diffcore::optim::{Adam, AdamConfig};
use crate::diffcore::tensor::Tensor;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, VoiceModel};
use crate::speakergen::{SpeakerGenConfig, SpeakerGenerator};
use crate::synthworld::CorpusStats;

pub const MAGIC: &[u8; 4] = b"NFVC";
pub const FORMAT_VERSION: u32 = 1;

/// JSON metadata stored alongside the tensors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub actnorms_initialized: bool,
    /// Present when the checkpoint carries resumable training state.
    pub optimizer: Option<OptimizerMeta>,
    pub speakergen: Option<SpeakerGenConfig>,
    /// Toy-encoder statistics of the training corpus, when known.
    pub toy_stats: Option<CorpusStats>,
    /// Locale names, aligned with generator locale ids.
    pub locales: Vec<String>,
    /// Phoneme inventory of the training corpus, aligned with table rows.
    #[serde(default)]
    pub phoneme_names: Vec<String>,
    /// Speaker ids whose reference embeddings are stored as
    /// `centroid.<id>` tensors.
    #[serde(default)]
    pub centroid_ids: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizerMeta {
    pub config: AdamConfig,
    pub step: u64,
}

/// A model plus its optional training state, speaker generator and
/// reference speaker embeddings.
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: VoiceModel,
    pub optimizer: Option<Adam>,
    pub speakergen: Option<SpeakerGenerator>,
    /// `(speaker id, embedding)` pairs ordered as `meta.centroid_ids`.
    pub centroids: Vec<(String, crate::conditioning::SpeakerEmbedding)>,
}

fn push_tensor(dir: &mut Vec<(String, Vec<usize>, u64)>, blob: &mut Vec<u8>, name: &str, t: &Tensor) {
    let offset = blob.len() as u64;
    for &v in t.data() {
        blob.extend_from_slice(&(v as f32).to_le_bytes());
    }
    dir.push((name.to_string(), t.shape().to_vec(), offset));
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut dir: Vec<(String, Vec<usize>, u64)> = Vec::new();
        let mut blob: Vec<u8> = Vec::new();

        self.model.visit_params(&mut |name, t| {
            push_tensor(&mut dir, &mut blob, name, t);
        });
        if let Some(opt) = &self.optimizer {
            let (m, v) = opt.moments();
            let mut names = Vec::new();
            self.model.visit_params(&mut |name, _| names.push(name.to_string()));
            if !m.is_empty() {
                for (name, t) in names.iter().zip(m) {
                    push_tensor(&mut dir, &mut blob, &format!("opt.m.{name}"), t);
                }
                for (name, t) in names.iter().zip(v) {
                    push_tensor(&mut dir, &mut blob, &format!("opt.v.{name}"), t);
                }
            }
        }
        if let Some(sg) = &self.speakergen {
            sg.visit_params(&mut |name, t| {
                push_tensor(&mut dir, &mut blob, &format!("sg.{name}"), t);
            });
        }
        for (id, emb) in &self.centroids {
            let t = Tensor::new(vec![emb.dim()], emb.values().to_vec())?;
            push_tensor(&mut dir, &mut blob, &format!("centroid.{id}"), &t);
        }
        let mut meta_fixed = self.meta.clone();
        meta_fixed.centroid_ids = self.centroids.iter().map(|(id, _)| id.clone()).collect();

        let meta = serde_json::to_vec(&meta_fixed)?;
        let mut out: Vec<u8> = Vec::with_capacity(blob.len() + meta.len() + 256);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u64).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(dir.len() as u32).to_le_bytes());
        for (name, shape, offset) in &dir {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            out.extend_from_slice(&offset.to_le_bytes());
        }
        out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
        out.extend_from_slice(&blob);
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let bytes = std::fs::read(path.as_ref())
            .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.as_ref().display())))?;
        let mut off = 0usize;
        let need = |off: usize, n: usize, len: usize| -> Result<()> {
            if off + n > len {
                Err(Error::Format("checkpoint truncated".into()))
            } else {
                Ok(())
            }
        };
        need(off, 4, bytes.len())?;
        if &bytes[0..4] != MAGIC {
            return Err(Error::Format(format!(
                "bad checkpoint magic {:?} (expected {:?})",
                &bytes[0..4],
                MAGIC
            )));
        }
        off += 4;
        need(off, 4, bytes.len())?;
        let version = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        off += 4;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint format version {version} unsupported (expected {FORMAT_VERSION})"
            )));
        }
        need(off, 8, bytes.len())?;
        let meta_len = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
        off += 8;
        need(off, meta_len, bytes.len())?;
        let meta: CheckpointMeta = serde_json::from_slice(&bytes[off..off + meta_len])?;
        off += meta_len;

        need(off, 4, bytes.len())?;
        let n_tensors = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        off += 4;
        let mut dir: Vec<(String, Vec<usize>, u64)> = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            need(off, 4, bytes.len())?;
            let name_len = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            need(off, name_len, bytes.len())?;
            let name = String::from_utf8(bytes[off..off + name_len].to_vec())
                .map_err(|_| Error::Format("tensor name is not utf-8".into()))?;
            off += name_len;
            need(off, 4, bytes.len())?;
            let ndim = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
            off += 4;
            if ndim == 0 || ndim > 4 {
                return Err(Error::Format(format!("tensor '{name}' rank {ndim} out of range")));
            }
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                need(off, 4, bytes.len())?;
                shape.push(u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize);
                off += 4;
            }
            need(off, 8, bytes.len())?;
            let offset = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
            off += 8;
            dir.push((name, shape, offset));
        }
        need(off, 8, bytes.len())?;
        let blob_len = u64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()) as usize;
        off += 8;
        need(off, blob_len, bytes.len())?;
        let blob = &bytes[off..off + blob_len];

        let mut tensors: BTreeMap<String, Tensor> = BTreeMap::new();
        for (name, shape, offset) in dir {
            let numel: usize = shape.iter().product();
            let start = offset as usize;
            if start + 4 * numel > blob.len() {
                return Err(Error::Format(format!("tensor '{name}' runs past the blob")));
            }
            let mut data = Vec::with_capacity(numel);
            for i in 0..numel {
                let v = f32::from_le_bytes(blob[start + 4 * i..start + 4 * i + 4].try_into().unwrap());
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("tensor '{name}' contains NaN/Inf")));
                }
                data.push(v as f64);
            }
            tensors.insert(name, Tensor::new(shape, data)?);
        }

        let mut model = VoiceModel::new(meta.model.clone())?;
        let mut missing = Vec::new();
        model.visit_params_mut(&mut |name, t| match tensors.get(name) {
            Some(loaded) if loaded.shape() == t.shape() => *t = loaded.clone(),
            Some(loaded) => missing.push(format!(
                "tensor '{name}' has shape {:?}, expected {:?}",
                loaded.shape(),
                t.shape()
            )),
            None => missing.push(format!("tensor '{name}' missing")),
        });
        if !missing.is_empty() {
            return Err(Error::Format(missing.join("; ")));
        }
        model.flow.set_actnorms_initialized(meta.actnorms_initialized);

        let optimizer = match &meta.optimizer {
            Some(om) => {
                let mut names = Vec::new();
                model.visit_params(&mut |name, _| names.push(name.to_string()));
                let has_moments = names.iter().all(|n| {
                    tensors.contains_key(&format!("opt.m.{n}"))
                        && tensors.contains_key(&format!("opt.v.{n}"))
                });
                let (m, v) = if has_moments {
                    (
                        names.iter().map(|n| tensors[&format!("opt.m.{n}")].clone()).collect(),
                        names.iter().map(|n| tensors[&format!("opt.v.{n}")].clone()).collect(),
                    )
                } else {
                    (Vec::new(), Vec::new())
                };
                Some(Adam::restore(om.config.clone(), om.step, m, v))
            }
            None => None,
        };

        let speakergen = match &meta.speakergen {
            Some(cfg) => {
                let mut gen = SpeakerGenerator::new(cfg.clone());
                let mut missing = Vec::new();
                gen.visit_params_mut(&mut |name, t| {
                    match tensors.get(&format!("sg.{name}")) {
                        Some(loaded) if loaded.shape() == t.shape() => *t = loaded.clone(),
                        _ => missing.push(name.to_string()),
                    }
                });
                if !missing.is_empty() {
                    return Err(Error::Format(format!(
                        "speaker generator tensors missing: {}",
                        missing.join(", ")
                    )));
                }
                Some(gen)
            }
            None => None,
        };

        let mut centroids = Vec::with_capacity(meta.centroid_ids.len());
        for id in &meta.centroid_ids {
            let t = tensors
                .get(&format!("centroid.{id}"))
                .ok_or_else(|| Error::Format(format!("centroid tensor for '{id}' missing")))?;
            centroids.push((
                id.clone(),
                crate::conditioning::SpeakerEmbedding::new(t.data().to_vec())?,
            ));
        }

        Ok(Self {
            meta,
            model,
            optimizer,
            speakergen,
            centroids,
        })
    }

    /// Look up a reference speaker embedding by id.
    pub fn centroid(&self, id: &str) -> Result<&crate::conditioning::SpeakerEmbedding> {
        self.centroids
            .iter()
            .find(|(cid, _)| cid == id)
            .map(|(_, e)| e)
            .ok_or_else(|| Error::Data(format!("no reference embedding for speaker '{id}'")))
    }
}
