//! Principal component analysis via eigendecomposition of the covariance of
//! mean-centered embeddings.
//!
//! The eigensolver is a cyclic Jacobi sweep: deterministic, accurate for
//! the symmetric matrices involved, and free of external dependencies at the
//! sizes in play (up to a few hundred dimensions).

use crate::conditioning::SpeakerEmbedding;
use crate::error::{Error, Result};

/// A fitted projection.
#[derive(Debug, Clone)]
pub struct PcaFit {
    /// Principal axes, one row per component, unit length, sorted by
    /// decreasing eigenvalue. Sign convention: the largest-magnitude
    /// coordinate of each axis is positive.
    pub components: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// `eigenvalues / sum(eigenvalues)`, non-increasing, sums to 1.
    pub explained_ratio: Vec<f64>,
    /// Minimal number of components whose cumulative explained variance
    /// reaches the requested target.
    pub k: usize,
    pub mean: Vec<f64>,
    /// Input projected onto the first two components (for scatter plots).
    pub coords_2d: Vec<(f64, f64)>,
}

/// Jacobi eigendecomposition of a symmetric matrix (lower storage ignored).
/// Returns (eigenvalues, eigenvectors as rows), unsorted.
fn jacobi_symmetric(a: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a.to_vec();
    let mut v = vec![vec![0.0; n]; n];
    for (i, row) in v.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0f64, |acc, x| acc.max(x.abs()))
        .max(1e-300);
    for _sweep in 0..100 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[i][j].abs());
            }
        }
        if off < 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if m[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (m[q][q] - m[p][p]) / (2.0 * m[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[k][p], m[k][q]);
                    m[k][p] = c * mkp - s * mkq;
                    m[k][q] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[p][k], m[q][k]);
                    m[p][k] = c * mpk - s * mqk;
                    m[q][k] = s * mpk + c * mqk;
                }
                for r in v.iter_mut() {
                    let (vp, vq) = (r[p], r[q]);
                    r[p] = c * vp - s * vq;
                    r[q] = s * vp + c * vq;
                }
            }
        }
    }
    let eigenvalues: Vec<f64> = (0..n).map(|i| m[i][i]).collect();
    // v holds eigenvectors in its columns; emit them as rows
    let eigenvectors: Vec<Vec<f64>> = (0..n).map(|j| (0..n).map(|i| v[i][j]).collect()).collect();
    (eigenvalues, eigenvectors)
}

/// Fit PCA and return the minimal component count reaching the explained
/// variance target (in `(0, 1]`), plus first-two-component coordinates.
pub fn pca_fit(embeddings: &[SpeakerEmbedding], variance_target: f64) -> Result<PcaFit> {
    if embeddings.len() < 2 {
        return Err(Error::Data("pca needs at least two embeddings".into()));
    }
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Config(format!(
            "variance target must lie in (0, 1], got {variance_target}"
        )));
    }
    let d = embeddings[0].dim();
    if embeddings.iter().any(|e| e.dim() != d) {
        return Err(Error::Data("embeddings of mixed dimensionality".into()));
    }
    let n = embeddings.len() as f64;
    let mut mean = vec![0.0; d];
    for e in embeddings {
        for (m, v) in mean.iter_mut().zip(e.values()) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = vec![vec![0.0; d]; d];
    for e in embeddings {
        let c: Vec<f64> = e.values().iter().zip(&mean).map(|(v, m)| v - m).collect();
        for i in 0..d {
            if c[i] == 0.0 {
                continue;
            }
            for j in i..d {
                cov[i][j] += c[i] * c[j];
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[i][j] /= n;
            cov[j][i] = cov[i][j];
        }
    }

    let (eigenvalues, eigenvectors) = jacobi_symmetric(&cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eigenvalues[b].total_cmp(&eigenvalues[a]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eigenvalues[i].max(0.0)).collect();
    let mut components: Vec<Vec<f64>> = order.iter().map(|&i| eigenvectors[i].clone()).collect();
    // deterministic sign: largest-magnitude coordinate positive
    for comp in &mut components {
        let lead = comp
            .iter()
            .fold(0.0f64, |acc, &x| if x.abs() > acc.abs() { x } else { acc });
        if lead < 0.0 {
            for x in comp.iter_mut() {
                *x = -*x;
            }
        }
    }

    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::Data(
            "pca rejected: zero-variance input (all embeddings identical)".into(),
        ));
    }
    let explained_ratio: Vec<f64> = eigenvalues.iter().map(|&e| e / total).collect();
    let mut cum = 0.0;
    let mut k = d;
    for (i, r) in explained_ratio.iter().enumerate() {
        cum += r;
        if cum >= variance_target - 1e-12 {
            k = i + 1;
            break;
        }
    }

    let coords_2d = embeddings
        .iter()
        .map(|e| {
            let c: Vec<f64> = e.values().iter().zip(&mean).map(|(v, m)| v - m).collect();
            let px: f64 = c.iter().zip(&components[0]).map(|(a, b)| a * b).sum();
            let py: f64 = if d > 1 {
                c.iter().zip(&components[1]).map(|(a, b)| a * b).sum()
            } else {
                0.0
            };
            (px, py)
        })
        .collect();

    Ok(PcaFit {
        components,
        eigenvalues,
        explained_ratio,
        k,
        mean,
        coords_2d,
    })
}

impl PcaFit {
    /// Project an embedding onto the first `k` components.
    pub fn project(&self, e: &SpeakerEmbedding, k: usize) -> Vec<f64> {
        let c: Vec<f64> = e.values().iter().zip(&self.mean).map(|(v, m)| v - m).collect();
        self.components[..k]
            .iter()
            .map(|comp| c.iter().zip(comp).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Reconstruct from a `k`-component projection.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let d = self.mean.len();
        let mut out = self.mean.clone();
        for (w, comp) in coords.iter().zip(&self.components) {
            for j in 0..d {
                out[j] += w * comp[j];
            }
        }
        out
    }
}
