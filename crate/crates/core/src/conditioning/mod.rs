//! Frame-level conditioning: the six-condition set driving the flow.
//!
//! A condition set bundles, per utterance: a speaker embedding, sentence-mean
//! normalized interpolated log-f0, a voiced/unvoiced flag per frame, phoneme
//! embeddings upsampled to frame rate by their durations, and an accent
//! embedding. [`frame_condition_matrix`] lays them out per frame as
//! `[ph | f0 | vuv | speaker | accent]` for the coupling blocks.
//!
//! Everything here is a pure function of immutable inputs; batch construction
//! is safe to parallelize.

pub mod dataset;

use serde::{Deserialize, Serialize};

use crate::diffcore::tensor::{self, Tensor};
use crate::error::{Error, Result};
use rand::Rng;

/// A `t x d` matrix of spectral frames: `t` time frames, `d` feature bins.
#[derive(Debug, Clone, PartialEq)]
pub struct MelTensor {
    inner: Tensor,
}

impl MelTensor {
    pub fn new(frames: usize, bins: usize, values: Vec<f64>) -> Result<Self> {
        if frames == 0 || bins == 0 {
            return Err(Error::Data(format!(
                "mel tensor needs t >= 1 and d >= 1, got t={frames}, d={bins}"
            )));
        }
        Ok(Self {
            inner: Tensor::new(vec![frames, bins], values)?,
        })
    }

    pub fn from_tensor(t: Tensor) -> Result<Self> {
        if t.shape().len() != 2 {
            return Err(Error::Data(format!(
                "mel tensor must be 2-D, got shape {:?}",
                t.shape()
            )));
        }
        Ok(Self { inner: t })
    }

    pub fn frames(&self) -> usize {
        self.inner.shape()[0]
    }

    pub fn bins(&self) -> usize {
        self.inner.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.inner
    }

    pub fn into_tensor(self) -> Tensor {
        self.inner
    }

    pub fn get(&self, frame: usize, bin: usize) -> f64 {
        self.inner.get2(frame, bin)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.inner.max_abs_diff(&other.inner)
    }

    /// Mean over time of each feature bin.
    pub fn time_mean(&self) -> Vec<f64> {
        let (t, d) = (self.frames(), self.bins());
        let mut out = vec![0.0; d];
        for i in 0..t {
            for j in 0..d {
                out[j] += self.get(i, j);
            }
        }
        for v in &mut out {
            *v /= t as f64;
        }
        out
    }
}

/// Fixed-dimension speaker identity vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeakerEmbedding {
    values: Vec<f64>,
}

impl SpeakerEmbedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("speaker embedding must be non-empty and finite".into()));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Unit-norm copy. Errors on the zero vector.
    pub fn normalized(&self) -> Result<Self> {
        let n = self.l2_norm();
        if n == 0.0 {
            return Err(Error::Data("cannot normalize a zero embedding".into()));
        }
        Ok(Self {
            values: self.values.iter().map(|v| v / n).collect(),
        })
    }
}

/// Learned lookup table: one embedding row per discrete id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    table: Tensor, // [n, dim]
}

impl EmbeddingTable {
    pub fn init<R: Rng + ?Sized>(entries: usize, dim: usize, std: f64, rng: &mut R) -> Self {
        Self {
            table: Tensor::randn(&[entries, dim], std, rng),
        }
    }

    pub fn from_tensor(table: Tensor) -> Result<Self> {
        if table.shape().len() != 2 {
            return Err(Error::Data("embedding table must be 2-D".into()));
        }
        Ok(Self { table })
    }

    pub fn entries(&self) -> usize {
        self.table.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.table.shape()[1]
    }

    pub fn row(&self, index: usize) -> Result<Vec<f64>> {
        if index >= self.entries() {
            return Err(Error::Data(format!(
                "id {index} out of range for table with {} entries",
                self.entries()
            )));
        }
        let d = self.dim();
        Ok(self.table.data()[index * d..(index + 1) * d].to_vec())
    }

    pub fn tensor(&self) -> &Tensor {
        &self.table
    }

    pub fn tensor_mut(&mut self) -> &mut Tensor {
        &mut self.table
    }
}

/// One labeled utterance: phonetic content plus prosody, and the feature
/// matrix when it exists (training data; absent for synthesis requests).
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub speaker_id: String,
    pub accent_id: usize,
    pub phoneme_ids: Vec<usize>,
    /// Frames per phoneme; sums to the utterance length.
    pub durations: Vec<usize>,
    /// Per-frame fundamental frequency in Hz, zero on unvoiced frames.
    pub f0_hz: Vec<f64>,
    pub mel: Option<MelTensor>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.durations.iter().sum()
    }

    /// Voiced flag per frame, derived from the f0 contour.
    pub fn vuv(&self) -> Vec<bool> {
        self.f0_hz.iter().map(|&f| f > 0.0).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.phoneme_ids.is_empty() {
            return Err(Error::Data(format!("utterance {}: empty phoneme sequence", self.id)));
        }
        if self.phoneme_ids.len() != self.durations.len() {
            return Err(Error::Data(format!(
                "utterance {}: {} phonemes but {} durations",
                self.id,
                self.phoneme_ids.len(),
                self.durations.len()
            )));
        }
        if self.durations.contains(&0) {
            return Err(Error::Data(format!("utterance {}: zero-frame phoneme duration", self.id)));
        }
        let t = self.frames();
        if self.f0_hz.len() != t {
            return Err(Error::Data(format!(
                "utterance {}: duration sum {} != f0 length {}",
                self.id,
                t,
                self.f0_hz.len()
            )));
        }
        if self.f0_hz.iter().any(|&f| !f.is_finite() || f < 0.0) {
            return Err(Error::Data(format!("utterance {}: f0 must be finite and >= 0", self.id)));
        }
        if let Some(mel) = &self.mel {
            if mel.frames() != t {
                return Err(Error::Data(format!(
                    "utterance {}: duration sum {} != mel frames {}",
                    self.id,
                    t,
                    mel.frames()
                )));
            }
        }
        Ok(())
    }
}

/// The assembled frame-resolution condition set.
#[derive(Debug, Clone)]
pub struct ConditionSet {
    pub speaker: SpeakerEmbedding,
    pub f0_norm: Vec<f64>,
    /// 0.0 or 1.0 per frame.
    pub vuv: Vec<f64>,
    /// `t x e_ph` phoneme embeddings at frame rate.
    pub ph_frames: Tensor,
    pub accent: Vec<f64>,
}

impl ConditionSet {
    pub fn new(
        speaker: SpeakerEmbedding,
        f0_norm: Vec<f64>,
        vuv: Vec<f64>,
        ph_frames: Tensor,
        accent: Vec<f64>,
    ) -> Result<Self> {
        let t = ph_frames.rows();
        if f0_norm.len() != t || vuv.len() != t {
            return Err(Error::Data(format!(
                "condition set frame mismatch: ph {} vs f0 {} vs vuv {}",
                t,
                f0_norm.len(),
                vuv.len()
            )));
        }
        if vuv.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::Data("vuv flags must be exactly 0 or 1".into()));
        }
        if f0_norm.iter().any(|v| !v.is_finite()) || accent.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("condition set contains NaN/Inf".into()));
        }
        Ok(Self {
            speaker,
            f0_norm,
            vuv,
            ph_frames,
            accent,
        })
    }

    pub fn frames(&self) -> usize {
        self.ph_frames.rows()
    }

    /// Total per-frame conditioning width.
    pub fn width(&self) -> usize {
        self.ph_frames.cols() + 2 + self.speaker.dim() + self.accent.len()
    }

    /// Same conditions with the speaker replaced (the voice-conversion knob).
    pub fn with_speaker(&self, speaker: SpeakerEmbedding) -> Result<Self> {
        if speaker.dim() != self.speaker.dim() {
            return Err(Error::Data(format!(
                "speaker embedding dimension {} != expected {}",
                speaker.dim(),
                self.speaker.dim()
            )));
        }
        Ok(Self {
            speaker,
            ..self.clone()
        })
    }
}

/// Result of f0 normalization.
#[derive(Debug, Clone)]
pub struct NormalizedF0 {
    pub values: Vec<f64>,
    /// True when the sentence had no voiced frame at all; `values` is zeros
    /// and callers should surface a warning.
    pub all_unvoiced: bool,
}

/// Sentence-level mean-normalized interpolated log-f0.
///
/// Voiced frames contribute their log-Hz value; unvoiced gaps are linearly
/// interpolated between the neighboring voiced frames, with the edges held at
/// the nearest voiced value. The sentence mean (over all frames after
/// interpolation, or over voiced frames only when `mean_over_voiced` is set)
/// is then subtracted, which removes any constant log-f0 offset and thereby
/// separates average pitch from sentence prosody.
pub fn normalize_f0(f0_hz: &[f64], vuv: &[bool], mean_over_voiced: bool) -> Result<NormalizedF0> {
    if f0_hz.len() != vuv.len() {
        return Err(Error::Data(format!(
            "f0 length {} != vuv length {}",
            f0_hz.len(),
            vuv.len()
        )));
    }
    for (i, (&f, &v)) in f0_hz.iter().zip(vuv).enumerate() {
        if v && f <= 0.0 {
            return Err(Error::Data(format!("voiced frame {i} has non-positive f0 {f}")));
        }
    }
    let t = f0_hz.len();
    let voiced_idx: Vec<usize> = (0..t).filter(|&i| vuv[i]).collect();
    if voiced_idx.is_empty() {
        return Ok(NormalizedF0 {
            values: vec![0.0; t],
            all_unvoiced: true,
        });
    }

    let mut logf0 = vec![0.0; t];
    for &i in &voiced_idx {
        logf0[i] = f0_hz[i].ln();
    }
    // Interpolate gaps; hold the nearest voiced value past the edges.
    let first = voiced_idx[0];
    let last = *voiced_idx.last().unwrap();
    for i in 0..first {
        logf0[i] = logf0[first];
    }
    for i in last + 1..t {
        logf0[i] = logf0[last];
    }
    for w in voiced_idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a + 1 {
            let span = (b - a) as f64;
            for i in a + 1..b {
                let frac = (i - a) as f64 / span;
                logf0[i] = logf0[a] * (1.0 - frac) + logf0[b] * frac;
            }
        }
    }

    let mean = if mean_over_voiced {
        voiced_idx.iter().map(|&i| logf0[i]).sum::<f64>() / voiced_idx.len() as f64
    } else {
        logf0.iter().sum::<f64>() / t as f64
    };
    for v in &mut logf0 {
        *v -= mean;
    }
    Ok(NormalizedF0 {
        values: logf0,
        all_unvoiced: false,
    })
}

/// Frame-level phoneme id stream: phoneme `i` repeated `durations[i]` times.
pub fn frame_phoneme_ids(phoneme_ids: &[usize], durations: &[usize]) -> Result<Vec<usize>> {
    if phoneme_ids.is_empty() {
        return Err(Error::Data("empty phoneme sequence".into()));
    }
    if phoneme_ids.len() != durations.len() {
        return Err(Error::Data(format!(
            "{} phonemes but {} durations",
            phoneme_ids.len(),
            durations.len()
        )));
    }
    if durations.contains(&0) {
        return Err(Error::Data("phoneme duration must be >= 1 frame".into()));
    }
    let mut out = Vec::with_capacity(durations.iter().sum());
    for (&id, &dur) in phoneme_ids.iter().zip(durations) {
        out.extend(std::iter::repeat_n(id, dur));
    }
    Ok(out)
}

/// Phoneme embeddings upsampled to frame rate by their durations.
pub fn upsample_phonemes(
    phoneme_ids: &[usize],
    durations: &[usize],
    table: &EmbeddingTable,
) -> Result<Tensor> {
    let frame_ids = frame_phoneme_ids(phoneme_ids, durations)?;
    if let Some(&bad) = phoneme_ids.iter().find(|&&id| id >= table.entries()) {
        return Err(Error::Data(format!(
            "unknown phoneme id {bad} (inventory has {} entries)",
            table.entries()
        )));
    }
    tensor::gather_rows(table.tensor(), &frame_ids)
}

/// Where the speaker vector of a condition set comes from.
pub enum SpeakerSource<'a> {
    /// An explicit vector: toy-encoder output, a generated new voice, or any
    /// user-supplied embedding (the zero-shot path).
    Provided(&'a SpeakerEmbedding),
    /// A row of the learned per-speaker lookup table.
    Lookup {
        table: &'a EmbeddingTable,
        index: usize,
    },
}

/// Options controlling condition assembly.
#[derive(Debug, Clone, Copy)]
pub struct CondOptions {
    /// When false (TTS-style profiles), f0 and vuv are replaced by zeros
    /// (the mean of the normalized contour) instead of oracle values.
    pub use_oracle_f0: bool,
    pub f0_mean_over_voiced: bool,
}

impl Default for CondOptions {
    fn default() -> Self {
        Self {
            use_oracle_f0: true,
            f0_mean_over_voiced: false,
        }
    }
}

/// Assemble the full condition set for one utterance.
pub fn build_condition_set(
    utt: &Utterance,
    phoneme_table: &EmbeddingTable,
    accent_table: &EmbeddingTable,
    speaker: SpeakerSource<'_>,
    opts: CondOptions,
) -> Result<ConditionSet> {
    utt.validate()?;
    let t = utt.frames();
    let ph_frames = upsample_phonemes(&utt.phoneme_ids, &utt.durations, phoneme_table)?;

    let (f0_norm, vuv) = if opts.use_oracle_f0 {
        let vuv_flags = utt.vuv();
        let norm = normalize_f0(&utt.f0_hz, &vuv_flags, opts.f0_mean_over_voiced)?;
        let vuv: Vec<f64> = vuv_flags.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
        (norm.values, vuv)
    } else {
        (vec![0.0; t], vec![0.0; t])
    };

    let speaker = match speaker {
        SpeakerSource::Provided(s) => s.clone(),
        SpeakerSource::Lookup { table, index } => SpeakerEmbedding::new(table.row(index)?)?,
    };
    let accent = accent_table.row(utt.accent_id)?;

    ConditionSet::new(speaker, f0_norm, vuv, ph_frames, accent)
}

/// Per-frame conditioning matrix `[ph | f0 | vuv | speaker | accent]`,
/// shape `t x width()`.
pub fn frame_condition_matrix(cond: &ConditionSet) -> Result<Tensor> {
    let t = cond.frames();
    let f0 = Tensor::new(vec![t, 1], cond.f0_norm.clone())?;
    let vuv = Tensor::new(vec![t, 1], cond.vuv.clone())?;
    let s_row = Tensor::new(vec![1, cond.speaker.dim()], cond.speaker.values().to_vec())?;
    let a_row = Tensor::new(vec![1, cond.accent.len()], cond.accent.clone())?;
    let s = tensor::broadcast_row(&s_row, t)?;
    let a = tensor::broadcast_row(&a_row, t)?;
    let m = tensor::concat_cols(&cond.ph_frames, &f0)?;
    let m = tensor::concat_cols(&m, &vuv)?;
    let m = tensor::concat_cols(&m, &s)?;
    tensor::concat_cols(&m, &a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn table(entries: usize, dim: usize, seed: u64) -> EmbeddingTable {
        EmbeddingTable::init(entries, dim, 0.5, &mut rng::seeded(seed))
    }

    #[test]
    fn constant_f0_normalizes_to_zero() {
        let f0 = vec![100.0; 6];
        let vuv = vec![true; 6];
        let out = normalize_f0(&f0, &vuv, false).unwrap();
        assert!(!out.all_unvoiced);
        for v in out.values {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn unvoiced_gap_is_linearly_interpolated() {
        // voiced ln-f0 [a, _, b]: the gap becomes (a+b)/2 before mean removal.
        let f0 = vec![100.0, 0.0, 400.0];
        let vuv = vec![true, false, true];
        let out = normalize_f0(&f0, &vuv, false).unwrap();
        let a = 100.0f64.ln();
        let b = 400.0f64.ln();
        let mid = (a + b) / 2.0;
        let mean = (a + mid + b) / 3.0;
        assert!((out.values[1] - (mid - mean)).abs() < 1e-12);
    }

    #[test]
    fn two_level_contour_hand_computed() {
        let f0 = vec![100.0, 100.0, 200.0, 200.0];
        let vuv = vec![true; 4];
        let out = normalize_f0(&f0, &vuv, false).unwrap();
        let half_ln2 = std::f64::consts::LN_2 / 2.0;
        let expect = [-half_ln2, -half_ln2, half_ln2, half_ln2];
        for (v, e) in out.values.iter().zip(expect) {
            assert!((v - e).abs() < 1e-12, "{v} vs {e}");
        }
    }

    #[test]
    fn all_unvoiced_yields_zeros_with_flag() {
        let out = normalize_f0(&[0.0; 5], &[false; 5], false).unwrap();
        assert!(out.all_unvoiced);
        assert_eq!(out.values, vec![0.0; 5]);
    }

    #[test]
    fn edges_hold_nearest_voiced_value() {
        let f0 = vec![0.0, 100.0, 0.0];
        let vuv = vec![false, true, false];
        let out = normalize_f0(&f0, &vuv, false).unwrap();
        // all three frames end up at ln(100) - mean = 0
        for v in out.values {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn f0_offset_invariance() {
        // Scaling f0 by a constant (adding a constant in log space) leaves
        // the normalized contour unchanged: that is the mean removal.
        let f0: Vec<f64> = vec![90.0, 110.0, 0.0, 130.0];
        let vuv = vec![true, true, false, true];
        let base = normalize_f0(&f0, &vuv, false).unwrap();
        let shifted: Vec<f64> = f0.iter().map(|&f| if f > 0.0 { f * 3.0 } else { 0.0 }).collect();
        let shifted = normalize_f0(&shifted, &vuv, false).unwrap();
        for (a, b) in base.values.iter().zip(&shifted.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn voiced_frame_with_zero_f0_rejected() {
        assert!(normalize_f0(&[0.0], &[true], false).is_err());
    }

    #[test]
    fn upsample_repeats_by_duration() {
        let tbl = table(4, 3, 1);
        let out = upsample_phonemes(&[1, 2], &[2, 3], &tbl).unwrap();
        assert_eq!(out.shape(), &[5, 3]);
        let r1 = tbl.row(1).unwrap();
        let r2 = tbl.row(2).unwrap();
        for f in 0..2 {
            for j in 0..3 {
                assert_eq!(out.get2(f, j), r1[j]);
            }
        }
        for f in 2..5 {
            for j in 0..3 {
                assert_eq!(out.get2(f, j), r2[j]);
            }
        }
    }

    #[test]
    fn upsample_single_phoneme_single_frame() {
        let tbl = table(2, 4, 2);
        let out = upsample_phonemes(&[0], &[1], &tbl).unwrap();
        assert_eq!(out.shape(), &[1, 4]);
        assert_eq!(out.data(), tbl.row(0).unwrap().as_slice());
    }

    #[test]
    fn upsample_rejects_empty_and_unknown() {
        let tbl = table(2, 4, 3);
        assert!(upsample_phonemes(&[], &[], &tbl).is_err());
        assert!(upsample_phonemes(&[5], &[2], &tbl).is_err());
    }

    fn test_utterance() -> Utterance {
        Utterance {
            id: "u0".into(),
            speaker_id: "spk0".into(),
            accent_id: 0,
            phoneme_ids: vec![0, 1],
            durations: vec![2, 2],
            f0_hz: vec![100.0, 100.0, 0.0, 120.0],
            mel: None,
        }
    }

    #[test]
    fn condition_sets_differ_only_in_speaker() {
        let ph = table(3, 4, 4);
        let ac = table(2, 2, 5);
        let s1 = SpeakerEmbedding::new(vec![1.0, 0.0]).unwrap();
        let s2 = SpeakerEmbedding::new(vec![0.0, 1.0]).unwrap();
        let utt = test_utterance();
        let c1 = build_condition_set(&utt, &ph, &ac, SpeakerSource::Provided(&s1), CondOptions::default()).unwrap();
        let c2 = build_condition_set(&utt, &ph, &ac, SpeakerSource::Provided(&s2), CondOptions::default()).unwrap();
        assert_eq!(c1.f0_norm, c2.f0_norm);
        assert_eq!(c1.vuv, c2.vuv);
        assert_eq!(c1.ph_frames, c2.ph_frames);
        assert_eq!(c1.accent, c2.accent);
        assert_ne!(c1.speaker, c2.speaker);
    }

    #[test]
    fn tts_profile_zeroes_f0_and_vuv() {
        let ph = table(3, 4, 6);
        let ac = table(2, 2, 7);
        let s = SpeakerEmbedding::new(vec![1.0, 0.0]).unwrap();
        let utt = test_utterance();
        let opts = CondOptions {
            use_oracle_f0: false,
            ..CondOptions::default()
        };
        let c = build_condition_set(&utt, &ph, &ac, SpeakerSource::Provided(&s), opts).unwrap();
        assert!(c.f0_norm.iter().all(|&v| v == 0.0));
        assert!(c.vuv.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn frame_mismatch_rejected_not_truncated() {
        let ph = table(3, 4, 8);
        let ac = table(2, 2, 9);
        let s = SpeakerEmbedding::new(vec![1.0]).unwrap();
        let mut utt = test_utterance();
        utt.f0_hz.pop(); // now 3 frames of f0 vs 4 of durations
        let err = build_condition_set(&utt, &ph, &ac, SpeakerSource::Provided(&s), CondOptions::default());
        assert!(err.is_err());
    }

    #[test]
    fn condition_matrix_layout_and_width() {
        let ph = table(3, 4, 10);
        let ac = table(2, 2, 11);
        let s = SpeakerEmbedding::new(vec![0.5, -0.5, 0.25]).unwrap();
        let utt = test_utterance();
        let c = build_condition_set(&utt, &ph, &ac, SpeakerSource::Provided(&s), CondOptions::default()).unwrap();
        let m = frame_condition_matrix(&c).unwrap();
        // width = e_ph + 1 + 1 + dim(s) + dim(a)
        assert_eq!(m.cols(), 4 + 1 + 1 + 3 + 2);
        assert_eq!(m.cols(), c.width());
        assert_eq!(m.rows(), 4);
        // speaker block is broadcast across frames
        for f in 0..4 {
            assert_eq!(m.get2(f, 6), 0.5);
            assert_eq!(m.get2(f, 7), -0.5);
            assert_eq!(m.get2(f, 8), 0.25);
        }
    }

    #[test]
    fn zero_conditions_give_zero_matrix() {
        let c = ConditionSet::new(
            SpeakerEmbedding::new(vec![0.0, 0.0]).unwrap(),
            vec![0.0; 3],
            vec![0.0; 3],
            Tensor::zeros(&[3, 2]),
            vec![0.0; 2],
        )
        .unwrap();
        let m = frame_condition_matrix(&c).unwrap();
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn vuv_must_be_binary() {
        let bad = ConditionSet::new(
            SpeakerEmbedding::new(vec![1.0]).unwrap(),
            vec![0.0; 2],
            vec![0.5, 1.0],
            Tensor::zeros(&[2, 2]),
            vec![0.0],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn permuted_phonemes_permute_ph_rows_only() {
        let tbl = table(3, 4, 12);
        let fwd = upsample_phonemes(&[0, 1], &[1, 1], &tbl).unwrap();
        let rev = upsample_phonemes(&[1, 0], &[1, 1], &tbl).unwrap();
        for j in 0..4 {
            assert_eq!(fwd.get2(0, j), rev.get2(1, j));
            assert_eq!(fwd.get2(1, j), rev.get2(0, j));
        }
    }
}
