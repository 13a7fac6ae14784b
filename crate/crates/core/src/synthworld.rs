//! Synthetic corpus with known ground-truth speaker identities.
//!
//! Every frame is built additively: a per-phoneme pattern vector, a
//! per-speaker identity bias, a prosody component driven by the sentence f0
//! contour, and Gaussian noise. Because the speaker enters only as an
//! additive bias, a perfect voice conversion shifts the time-mean by exactly
//! `bias_B - bias_A`, which makes conversion quantitatively checkable.
//!
//! The toy speaker encoder is the evaluation reference: time-mean of the
//! frames minus the corpus mean, projected to the embedding dimension by a
//! fixed seeded matrix and L2-normalized.
//!
//! Generation is a pure function of `(config, seed)`; values are rounded to
//! f32 at the source so a corpus round-trips through the on-disk container
//! bit-exactly.

use serde::{Deserialize, Serialize};

use crate::conditioning::dataset::{
    quantize_f32, Dataset, Manifest, PhonemeDef, SpeakerDef, Split, UtteranceEntry,
    MANIFEST_VERSION,
};
use crate::conditioning::{MelTensor, SpeakerEmbedding, Utterance};
use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_speakers: usize,
    pub n_locales: usize,
    /// Feature bins per frame (80 mirrors a full-scale mel front end; 8 is
    /// the desk-scale default).
    pub bins: usize,
    pub n_phonemes: usize,
    pub min_frames: usize,
    pub max_frames: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub noise_std: f64,
    pub bias_scale: f64,
    /// Minimum pairwise L2 distance between speaker biases.
    pub min_bias_gap: f64,
    pub pattern_scale: f64,
    /// Strength of the prosody component mixed into the frames.
    pub f0_feature_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_speakers: 8,
            n_locales: 2,
            bins: 8,
            n_phonemes: 12,
            min_frames: 20,
            max_frames: 60,
            n_train: 200,
            n_eval: 40,
            noise_std: 0.1,
            bias_scale: 1.0,
            min_bias_gap: 1.0,
            pattern_scale: 0.8,
            f0_feature_scale: 0.5,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_speakers == 0
            || self.n_locales == 0
            || self.bins == 0
            || self.n_phonemes == 0
            || self.n_train == 0
            || self.min_frames < 2
        {
            return Err(Error::Config("synth config extents must be positive".into()));
        }
        if self.n_locales > self.n_speakers {
            return Err(Error::Config("more locales than speakers".into()));
        }
        if self.max_frames < self.min_frames {
            return Err(Error::Config("max_frames < min_frames".into()));
        }
        // Identifiability: frame noise must stay well below the identity gap.
        if self.noise_std >= self.min_bias_gap / 4.0 {
            return Err(Error::Config(format!(
                "noise_std {} too large for bias gap {} (needs < gap/4)",
                self.noise_std, self.min_bias_gap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthSpeaker {
    pub id: String,
    pub locale: usize,
    pub bias: Vec<f64>,
    pub base_log_f0: f64,
}

#[derive(Debug, Clone)]
struct SynthPhoneme {
    name: String,
    voiced: bool,
    pattern: Vec<f64>,
}

/// The generating process: speakers, phoneme patterns, prosody direction.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub cfg: SynthConfig,
    pub speakers: Vec<SynthSpeaker>,
    phonemes: Vec<SynthPhoneme>,
    f0_direction: Vec<f64>,
}

/// Speaker-independent utterance content.
#[derive(Debug, Clone)]
pub struct UtteranceContent {
    pub phoneme_ids: Vec<usize>,
    pub durations: Vec<usize>,
    /// Per-frame sentence prosody contour (log-f0 deviation).
    pub contour: Vec<f64>,
}

fn l2_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.iter().map(|x| x / n).collect()
}

impl SynthWorld {
    pub fn generate(cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        let mut world_rng = rng::seeded_stream(cfg.seed, 0x776f726c64);

        let mut speakers: Vec<SynthSpeaker> = Vec::with_capacity(cfg.n_speakers);
        for s in 0..cfg.n_speakers {
            let bias = Self::draw_bias(&cfg, &speakers, &mut world_rng)?;
            // base pitch ramps across speakers: ~120 Hz up to ~220 Hz
            let frac = s as f64 / cfg.n_speakers.max(2) as f64;
            speakers.push(SynthSpeaker {
                id: format!("spk{s}"),
                locale: s % cfg.n_locales,
                bias,
                base_log_f0: (120.0f64).ln() + frac * ((220.0f64).ln() - (120.0f64).ln()),
            });
        }

        let phonemes = (0..cfg.n_phonemes)
            .map(|p| SynthPhoneme {
                name: format!("ph{p:02}"),
                // roughly one third unvoiced
                voiced: p % 3 != 2,
                pattern: (0..cfg.bins)
                    .map(|_| cfg.pattern_scale * rng::standard_normal(&mut world_rng))
                    .collect(),
            })
            .collect();

        let f0_direction = normalized(&rng::normal_vec(&mut world_rng, cfg.bins));

        Ok(Self {
            cfg,
            speakers,
            phonemes,
            f0_direction,
        })
    }

    /// Rejection-sample a bias far enough from the existing ones, both in raw
    /// L2 (additive identifiability) and after normalization (cosine
    /// identifiability of the encoder space).
    fn draw_bias<R: Rng + ?Sized>(
        cfg: &SynthConfig,
        existing: &[SynthSpeaker],
        rng_: &mut R,
    ) -> Result<Vec<f64>> {
        for _ in 0..10_000 {
            let cand: Vec<f64> = (0..cfg.bins)
                .map(|_| cfg.bias_scale * rng::standard_normal(rng_))
                .collect();
            let cand_n = normalized(&cand);
            let ok = existing.iter().all(|s| {
                l2_dist(&cand, &s.bias) >= cfg.min_bias_gap
                    && l2_dist(&cand_n, &normalized(&s.bias)) >= 0.4
            });
            if ok {
                return Ok(cand);
            }
        }
        Err(Error::Config(
            "could not place distinct speaker biases; lower min_bias_gap or n_speakers".into(),
        ))
    }

    pub fn phoneme_defs(&self) -> Vec<PhonemeDef> {
        self.phonemes
            .iter()
            .map(|p| PhonemeDef {
                name: p.name.clone(),
                voiced: p.voiced,
            })
            .collect()
    }

    pub fn locale_names(&self) -> Vec<String> {
        (0..self.cfg.n_locales).map(|l| format!("loc{l}")).collect()
    }

    /// Draw utterance content (text, durations, prosody) from a content
    /// stream, independent of any speaker.
    pub fn draw_content<R: Rng + ?Sized>(&self, rng_: &mut R) -> UtteranceContent {
        let t = rng_.random_range(self.cfg.min_frames..=self.cfg.max_frames);
        let mut phoneme_ids = Vec::new();
        let mut durations = Vec::new();
        let mut remaining = t;
        while remaining > 0 {
            let dur = rng_.random_range(2..=6usize).min(remaining);
            phoneme_ids.push(rng_.random_range(0..self.cfg.n_phonemes));
            durations.push(dur);
            remaining -= dur;
        }
        let amp = 0.1 + 0.1 * rng_.random::<f64>();
        let cycles = 0.5 + rng_.random::<f64>();
        let phase = std::f64::consts::TAU * rng_.random::<f64>();
        let contour = (0..t)
            .map(|f| amp * (std::f64::consts::TAU * cycles * f as f64 / t as f64 + phase).sin())
            .collect();
        UtteranceContent {
            phoneme_ids,
            durations,
            contour,
        }
    }

    /// Render content as a specific speaker. At zero noise, two renderings of
    /// the same content differ exactly by the speakers' bias difference.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        id: &str,
        content: &UtteranceContent,
        speaker_idx: usize,
        noise_rng: &mut R,
    ) -> Result<Utterance> {
        let spk = self
            .speakers
            .get(speaker_idx)
            .ok_or_else(|| Error::Data(format!("speaker index {speaker_idx} out of range")))?;
        let t: usize = content.durations.iter().sum();
        let d = self.cfg.bins;
        let mut mel = vec![0.0; t * d];
        let mut f0 = vec![0.0; t];
        let mut frame = 0usize;
        for (&pid, &dur) in content.phoneme_ids.iter().zip(&content.durations) {
            let ph = &self.phonemes[pid];
            for _ in 0..dur {
                let c = content.contour[frame];
                for j in 0..d {
                    let mut v = ph.pattern[j] + spk.bias[j];
                    if ph.voiced {
                        v += self.cfg.f0_feature_scale * c * self.f0_direction[j];
                    }
                    v += self.cfg.noise_std * rng::standard_normal(noise_rng);
                    mel[frame * d + j] = v as f32 as f64;
                }
                f0[frame] = if ph.voiced {
                    ((spk.base_log_f0 + c).exp()) as f32 as f64
                } else {
                    0.0
                };
                frame += 1;
            }
        }
        let utt = Utterance {
            id: id.to_string(),
            speaker_id: spk.id.clone(),
            accent_id: spk.locale,
            phoneme_ids: content.phoneme_ids.clone(),
            durations: content.durations.clone(),
            f0_hz: f0,
            mel: Some(MelTensor::new(t, d, mel)?),
        };
        utt.validate()?;
        Ok(utt)
    }

    fn phoneme_names(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.phonemes[i].name.clone()).collect()
    }

    /// Generate the full corpus into a dataset directory.
    pub fn write_corpus(&self, root: impl AsRef<std::path::Path>) -> Result<Dataset> {
        let manifest = Manifest {
            format_version: MANIFEST_VERSION,
            feature_bins: self.cfg.bins as u32,
            locales: self.locale_names(),
            phoneme_inventory: self.phoneme_defs(),
            speakers: self
                .speakers
                .iter()
                .map(|s| SpeakerDef {
                    id: s.id.clone(),
                    locale: format!("loc{}", s.locale),
                })
                .collect(),
            utterances: Vec::new(),
        };
        let mut dataset = Dataset::create(root, manifest)?;

        let mut entries = Vec::new();
        let total = self.cfg.n_train + self.cfg.n_eval;
        for i in 0..total {
            let split = if i < self.cfg.n_train { Split::Train } else { Split::Eval };
            let prefix = match split {
                Split::Train => "train",
                Split::Eval => "eval",
            };
            let id = format!("utt_{prefix}_{i:04}");
            // one content stream and one noise stream per utterance
            let mut content_rng = rng::seeded_stream(self.cfg.seed, 1_000_000 + i as u64);
            let mut noise_rng = rng::seeded_stream(self.cfg.seed, 2_000_000 + i as u64);
            let content = self.draw_content(&mut content_rng);
            let speaker_idx = i % self.cfg.n_speakers;
            let utt = self.realize(&id, &content, speaker_idx, &mut noise_rng)?;

            let entry = UtteranceEntry {
                id: id.clone(),
                speaker: utt.speaker_id.clone(),
                accent: format!("loc{}", utt.accent_id),
                split,
                phonemes: self.phoneme_names(&content.phoneme_ids),
                durations: content.durations.iter().map(|&d| d as u32).collect(),
                frames: utt.frames() as u32,
                mel_file: format!("tensors/{id}.mel.bin"),
                f0_file: format!("tensors/{id}.f0.bin"),
            };
            let f0_tensor = Tensor::new(vec![utt.f0_hz.len()], utt.f0_hz.clone())?;
            dataset.write_utterance_tensors(
                &entry,
                &quantize_f32(utt.mel.as_ref().unwrap().tensor()),
                &quantize_f32(&f0_tensor),
            )?;
            entries.push(entry);
        }
        dataset.manifest.utterances = entries;
        Dataset::create(dataset.root(), dataset.manifest.clone())
    }
}

/// Generate a corpus in one call.
pub fn gen_corpus(cfg: SynthConfig, root: impl AsRef<std::path::Path>) -> Result<Dataset> {
    SynthWorld::generate(cfg)?.write_corpus(root)
}

// ── Toy speaker encoder ──────────────────────────────────────────────

/// Corpus statistics backing the toy encoder: the global frame mean plus the
/// seed of the fixed projection to embedding space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusStats {
    pub global_mean: Vec<f64>,
    pub embed_dim: usize,
    pub proj_seed: u64,
}

impl CorpusStats {
    /// Compute over the train split of a dataset. The embedding dimension
    /// must be at least the feature-bin count so the projection below can be
    /// an exact isometry.
    pub fn compute(dataset: &Dataset, embed_dim: usize, proj_seed: u64) -> Result<Self> {
        let bins = dataset.manifest.feature_bins as usize;
        if embed_dim < bins {
            return Err(Error::Config(format!(
                "toy encoder embed_dim {embed_dim} must be >= feature bins {bins}"
            )));
        }
        let mut mean = vec![0.0; bins];
        let mut frames = 0usize;
        for entry in dataset.entries(Some(Split::Train)) {
            let utt = dataset.load_utterance(entry)?;
            let mel = utt.mel.as_ref().unwrap();
            for f in 0..mel.frames() {
                for j in 0..bins {
                    mean[j] += mel.get(f, j);
                }
            }
            frames += mel.frames();
        }
        if frames == 0 {
            return Err(Error::Data("dataset has no training frames".into()));
        }
        for v in &mut mean {
            *v /= frames as f64;
        }
        Ok(Self {
            global_mean: mean,
            embed_dim,
            proj_seed,
        })
    }

    /// The fixed `bins x embed_dim` projection matrix: seeded random rows,
    /// Gram-Schmidt orthonormalized, so inner products (and thus cosines)
    /// survive the lift into embedding space exactly.
    pub fn projection(&self) -> Tensor {
        let bins = self.global_mean.len();
        let mut r = rng::seeded_stream(self.proj_seed, 0x70726f6a);
        let mut rows: Vec<Vec<f64>> = (0..bins)
            .map(|_| rng::normal_vec(&mut r, self.embed_dim))
            .collect();
        for i in 0..bins {
            for j in 0..i {
                let d: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| a * b).sum();
                let prev = rows[j].clone();
                for (x, p) in rows[i].iter_mut().zip(&prev) {
                    *x -= d * p;
                }
            }
            let n = rows[i].iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
            for x in rows[i].iter_mut() {
                *x /= n;
            }
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Tensor::new(vec![bins, self.embed_dim], flat).expect("orthonormal basis is finite")
    }
}

/// Toy speaker encoder: time-mean, center, project, L2-normalize.
pub fn toy_encode(mel: &MelTensor, stats: &CorpusStats) -> Result<SpeakerEmbedding> {
    if mel.bins() != stats.global_mean.len() {
        return Err(Error::ShapeMismatch {
            op: "toy_encode",
            lhs: vec![mel.bins()],
            rhs: vec![stats.global_mean.len()],
        });
    }
    let tm = mel.time_mean();
    let centered: Vec<f64> = tm.iter().zip(&stats.global_mean).map(|(a, b)| a - b).collect();
    let row = Tensor::new(vec![1, centered.len()], centered)?;
    let proj = tensor::matmul(&row, &stats.projection())?;
    SpeakerEmbedding::new(proj.data().to_vec())?.normalized()
}

/// Per-speaker centroid embeddings over the train split: mean of utterance
/// embeddings, re-normalized. Ordered as the manifest's speaker list, so the
/// position doubles as the lookup-table index of that speaker.
pub fn speaker_centroids(
    dataset: &Dataset,
    stats: &CorpusStats,
) -> Result<Vec<(String, SpeakerEmbedding)>> {
    let mut sums: std::collections::BTreeMap<String, (Vec<f64>, usize)> = Default::default();
    for entry in dataset.entries(Some(Split::Train)) {
        let utt = dataset.load_utterance(entry)?;
        let e = toy_encode(utt.mel.as_ref().unwrap(), stats)?;
        let slot = sums
            .entry(utt.speaker_id.clone())
            .or_insert_with(|| (vec![0.0; stats.embed_dim], 0));
        for (acc, v) in slot.0.iter_mut().zip(e.values()) {
            *acc += v;
        }
        slot.1 += 1;
    }
    dataset
        .manifest
        .speakers
        .iter()
        .filter_map(|spk| sums.get(&spk.id).map(|slot| (spk.id.clone(), slot)))
        .map(|(id, (sum, n))| {
            let mean: Vec<f64> = sum.iter().map(|v| v / *n as f64).collect();
            Ok((id, SpeakerEmbedding::new(mean)?.normalized()?))
        })
        .collect()
}

/// `(locale index, centroid)` pairs for the speaker-generator training pool.
pub fn speaker_pool(dataset: &Dataset, stats: &CorpusStats) -> Result<Vec<(usize, SpeakerEmbedding)>> {
    let centroids = speaker_centroids(dataset, stats)?;
    centroids
        .into_iter()
        .map(|(id, emb)| {
            let spk = dataset.manifest.speaker(&id)?;
            Ok((dataset.manifest.locale_index(&spk.locale)?, emb))
        })
        .collect()
}
