//! Latent-topology metrics over embedding sets.
//!
//! Effective rank is the exponential of the entropy of the normalized
//! singular-value spectrum of the row-centered matrix. Centroid shift is
//! the Euclidean distance between set centroids. Diversity is the mean
//! pairwise Euclidean distance. Constrained semantic expansion (CSE) is
//! diversity divided by shift, undefined below an epsilon shift.
//! Directional similarity is the mean pairwise cosine of difference
//! vectors relative to a seed. Aligned variance projects a set onto the
//! top principal directions of the pooled collection and averages the
//! per-direction sample variance.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::embedding::{centroid, cosine, euclidean, EmbeddingVector};

/// Relative floor below which singular values / eigenvalues count as zero.
const SPECTRUM_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopologyError {
    #[error("need at least {needed} vectors, got {got}")]
    TooFewVectors { needed: usize, got: usize },
    #[error("degenerate set: zero spectrum (all vectors identical)")]
    DegenerateSet,
    #[error("dimension mismatch across vectors")]
    DimensionMismatch,
    #[error("no embedding set labeled {0:?}")]
    UnknownLabel(String),
}

/// A labeled collection of uniform-dimension vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingSet {
    pub label: String,
    pub vectors: Vec<EmbeddingVector>,
}

impl EmbeddingSet {
    pub fn new(label: &str, vectors: Vec<EmbeddingVector>) -> Result<Self, TopologyError> {
        let Some(first) = vectors.first() else {
            return Err(TopologyError::TooFewVectors { needed: 1, got: 0 });
        };
        let dims = first.dims();
        if vectors.iter().any(|v| v.dims() != dims) {
            return Err(TopologyError::DimensionMismatch);
        }
        Ok(Self {
            label: label.to_string(),
            vectors,
        })
    }

    pub fn dims(&self) -> usize {
        self.vectors[0].dims()
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn rows_matrix(vectors: &[EmbeddingVector]) -> DMatrix<f64> {
    let n = vectors.len();
    let d = vectors[0].dims();
    DMatrix::from_fn(n, d, |i, j| vectors[i].values()[j])
}

fn center_rows(mut m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    for j in 0..m.ncols() {
        let mean = m.column(j).sum() / n as f64;
        for i in 0..n {
            m[(i, j)] -= mean;
        }
    }
    m
}

/// exp(entropy) of the normalized singular-value spectrum of the centered
/// set. Lies in [1, min(n−1, dims)] for non-degenerate input.
pub fn effective_rank(set: &EmbeddingSet) -> Result<f64, TopologyError> {
    if set.len() < 2 {
        return Err(TopologyError::TooFewVectors {
            needed: 2,
            got: set.len(),
        });
    }
    let centered = center_rows(rows_matrix(&set.vectors));
    let svd = centered.svd(false, false);
    let mut sigmas: Vec<f64> = svd.singular_values.iter().copied().collect();
    let max = sigmas.iter().cloned().fold(0.0f64, f64::max);
    if max <= 0.0 {
        return Err(TopologyError::DegenerateSet);
    }
    sigmas.retain(|&s| s > SPECTRUM_FLOOR * max);
    let total: f64 = sigmas.iter().sum();
    let entropy: f64 = sigmas
        .iter()
        .map(|&s| {
            let p = s / total;
            -p * p.ln()
        })
        .sum();
    Ok(entropy.exp())
}

/// Euclidean distance between the centroids of `set` and `anchor`.
pub fn centroid_shift(set: &EmbeddingSet, anchor: &EmbeddingSet) -> Result<f64, TopologyError> {
    let a = centroid(&set.vectors).map_err(|_| TopologyError::DimensionMismatch)?;
    let b = centroid(&anchor.vectors).map_err(|_| TopologyError::DimensionMismatch)?;
    euclidean(&a, &b).map_err(|_| TopologyError::DimensionMismatch)
}

/// Mean pairwise Euclidean distance: (2 / n(n−1)) Σ_{i<j} ‖v_i − v_j‖.
pub fn diversity(set: &EmbeddingSet) -> Result<f64, TopologyError> {
    let n = set.len();
    if n < 2 {
        return Err(TopologyError::TooFewVectors { needed: 2, got: n });
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += euclidean(&set.vectors[i], &set.vectors[j])
                .map_err(|_| TopologyError::DimensionMismatch)?;
        }
    }
    Ok(total * 2.0 / (n as f64 * (n - 1) as f64))
}

/// Diversity over centroid shift; `None` when the shift is below
/// `eps_shift` (anchor ≈ set, expansion ratio undefined).
pub fn cse(
    set: &EmbeddingSet,
    anchor: &EmbeddingSet,
    eps_shift: f64,
) -> Result<Option<f64>, TopologyError> {
    let shift = centroid_shift(set, anchor)?;
    if shift < eps_shift {
        return Ok(None);
    }
    Ok(Some(diversity(set)? / shift))
}

/// Mean pairwise cosine over difference vectors. Zero-norm differences are
/// excluded (with a warning); at least two must survive.
pub fn pairwise_direction_mean(diffs: &[EmbeddingVector]) -> Result<f64, TopologyError> {
    let kept: Vec<&EmbeddingVector> = diffs
        .iter()
        .filter(|d| {
            let keep = d.norm() > 0.0;
            if !keep {
                log::warn!("directional similarity: excluding zero-norm difference vector");
            }
            keep
        })
        .collect();
    if kept.len() < 2 {
        return Err(TopologyError::TooFewVectors {
            needed: 2,
            got: kept.len(),
        });
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..kept.len() {
        for j in i + 1..kept.len() {
            total += cosine(kept[i], kept[j]).map_err(|_| TopologyError::DimensionMismatch)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Mean pairwise cosine of (v_i − seed) difference vectors.
pub fn directional_similarity(
    set: &EmbeddingSet,
    seed_vec: &EmbeddingVector,
) -> Result<f64, TopologyError> {
    if set.len() < 2 {
        return Err(TopologyError::TooFewVectors {
            needed: 2,
            got: set.len(),
        });
    }
    let diffs: Vec<EmbeddingVector> = set
        .vectors
        .iter()
        .map(|v| {
            v.sub(seed_vec)
                .map_err(|_| TopologyError::DimensionMismatch)
        })
        .collect::<Result<_, _>>()?;
    pairwise_direction_mean(&diffs)
}

/// Deterministic sign: flip so the first nonzero component is positive.
fn fix_sign(mut v: nalgebra::DVector<f64>) -> nalgebra::DVector<f64> {
    if let Some(first) = v.iter().find(|x| **x != 0.0) {
        if *first < 0.0 {
            v.neg_mut();
        }
    }
    v
}

/// Pool every set's vectors, take the top min(p, pooled rank) principal
/// directions of the pooled covariance, project the target set (centered
/// by its own mean) onto them, and return the mean per-direction sample
/// variance. Returns 0 when the pooled spectrum is empty or the target is
/// a singleton.
pub fn aligned_variance(
    sets: &[EmbeddingSet],
    target_label: &str,
    p: usize,
) -> Result<f64, TopologyError> {
    let target = sets
        .iter()
        .find(|s| s.label == target_label)
        .ok_or_else(|| TopologyError::UnknownLabel(target_label.to_string()))?;
    let pooled: Vec<EmbeddingVector> = sets
        .iter()
        .flat_map(|s| s.vectors.iter().cloned())
        .collect();
    let dims = target.dims();
    if pooled.iter().any(|v| v.dims() != dims) {
        return Err(TopologyError::DimensionMismatch);
    }
    if pooled.len() < 2 {
        return Err(TopologyError::TooFewVectors {
            needed: 2,
            got: pooled.len(),
        });
    }

    let centered = center_rows(rows_matrix(&pooled));
    let covariance = centered.transpose() * &centered / (pooled.len() - 1) as f64;
    let eigen = SymmetricEigen::new(covariance);
    let mut spectrum: Vec<(f64, nalgebra::DVector<f64>)> = eigen
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &value)| {
            (
                value.max(0.0),
                fix_sign(eigen.eigenvectors.column(i).into_owned()),
            )
        })
        .collect();
    spectrum.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("eigenvalues are finite"));

    let max = spectrum.first().map(|(v, _)| *v).unwrap_or(0.0);
    if max <= 0.0 {
        return Ok(0.0);
    }
    let rank = spectrum
        .iter()
        .filter(|(v, _)| *v > SPECTRUM_FLOOR * max)
        .count();
    let q = p.min(rank);
    if q == 0 {
        return Ok(0.0);
    }
    if target.len() < 2 {
        return Ok(0.0);
    }

    let target_centered = center_rows(rows_matrix(&target.vectors));
    let mut per_direction = 0.0;
    for (_, direction) in spectrum.iter().take(q) {
        let projections = &target_centered * direction;
        let variance = projections.iter().map(|x| x * x).sum::<f64>() / (target.len() - 1) as f64;
        per_direction += variance;
    }
    Ok(per_direction / q as f64)
}
