//! Objective evaluation suite: speaker-encoder cosine similarity, embedding
//! variance, nearest-neighbor analyses and PCA projection.

pub mod pca;
pub mod report;

pub use pca::{pca_fit, PcaFit};

use crate::conditioning::SpeakerEmbedding;
use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine similarity between two embeddings. Rejects zero vectors.
pub fn cosine_similarity(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            op: "cosine",
            lhs: vec![a.dim()],
            rhs: vec![b.dim()],
        });
    }
    let (na, nb) = (norm(a.values()), norm(b.values()));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Data("cosine of a zero embedding is undefined".into()));
    }
    Ok(dot(a.values(), b.values()) / (na * nb))
}

/// Cosine distance: `1 - cosine similarity`.
pub fn cosine_distance(a: &SpeakerEmbedding, b: &SpeakerEmbedding) -> Result<f64> {
    Ok(1.0 - cosine_similarity(a, b)?)
}

/// Speaker-encoder cosine similarity: the mean cosine between each generated
/// utterance's embedding and the target embedding (mean of cosines, not
/// cosine of means).
pub fn secs(generated: &[SpeakerEmbedding], target: &SpeakerEmbedding) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Data("secs needs at least one generated embedding".into()));
    }
    let mut acc = 0.0;
    for g in generated {
        acc += cosine_similarity(g, target)?;
    }
    Ok(acc / generated.len() as f64)
}

/// Per-dimension population variance of the embeddings, summed over
/// dimensions. Needs at least two embeddings.
pub fn variance_sum(embeddings: &[SpeakerEmbedding]) -> Result<f64> {
    if embeddings.len() < 2 {
        return Err(Error::Data("variance needs at least two embeddings".into()));
    }
    let d = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != d) {
        return Err(Error::Data("embeddings of mixed dimensionality".into()));
    }
    let n = embeddings.len() as f64;
    let mut total = 0.0;
    for j in 0..d {
        let mean = embeddings.iter().map(|e| e.values()[j]).sum::<f64>() / n;
        total += embeddings
            .iter()
            .map(|e| {
                let v = e.values()[j] - mean;
                v * v
            })
            .sum::<f64>()
            / n;
    }
    Ok(total)
}

/// Index and cosine distance of the pool entry closest to the query.
/// Ties break toward the lowest index.
pub fn nearest_neighbor(
    query: &SpeakerEmbedding,
    pool: &[SpeakerEmbedding],
) -> Result<(usize, f64)> {
    if pool.is_empty() {
        return Err(Error::Data("nearest neighbor over an empty pool".into()));
    }
    let mut best = (0usize, f64::INFINITY);
    for (i, p) in pool.iter().enumerate() {
        let d = cosine_distance(query, p)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// Nearest neighbor of pool entry `index` within the pool excluding itself.
pub fn nn_to_nn(index: usize, pool: &[SpeakerEmbedding]) -> Result<(usize, f64)> {
    if pool.len() < 2 {
        return Err(Error::Data("nn2nn needs a pool of at least two".into()));
    }
    let query = &pool[index];
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in pool.iter().enumerate() {
        if i == index {
            continue;
        }
        let d = cosine_distance(query, p)?;
        if d < best.1 {
            best = (i, d);
        }
    }
    Ok(best)
}

/// One row of the new-voice distance report.
#[derive(Debug, Clone)]
pub struct NewVoiceRow {
    pub new_index: usize,
    pub nn_index: usize,
    /// Distance from the new voice to its nearest training voice.
    pub dist_new_to_nn: f64,
    pub nn2nn_index: usize,
    /// Distance from that training voice to its own nearest neighbor.
    pub dist_nn_to_nn2nn: f64,
}

/// Distance report for generated voices against the training pool.
#[derive(Debug, Clone)]
pub struct NewVoiceReport {
    pub rows: Vec<NewVoiceRow>,
    /// Fraction of new voices farther from their NN than that NN is from its
    /// own nearest neighbor; the "is this voice new?" score.
    pub fraction_beyond_nn2nn: f64,
}

pub fn new_voice_distance_report(
    new_voices: &[SpeakerEmbedding],
    pool: &[SpeakerEmbedding],
) -> Result<NewVoiceReport> {
    if new_voices.is_empty() || pool.is_empty() {
        return Err(Error::Data("distance report needs non-empty inputs".into()));
    }
    let mut rows = Vec::with_capacity(new_voices.len());
    let mut beyond = 0usize;
    for (qi, q) in new_voices.iter().enumerate() {
        let (nn, d_new) = nearest_neighbor(q, pool)?;
        let (nn2nn, d_nn) = nn_to_nn(nn, pool)?;
        if d_new > d_nn {
            beyond += 1;
        }
        rows.push(NewVoiceRow {
            new_index: qi,
            nn_index: nn,
            dist_new_to_nn: d_new,
            nn2nn_index: nn2nn,
            dist_nn_to_nn2nn: d_nn,
        });
    }
    Ok(NewVoiceReport {
        fraction_beyond_nn2nn: beyond as f64 / rows.len() as f64,
        rows,
    })
}
