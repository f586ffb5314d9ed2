//! Consensus scores, the reference-only limit, and deterministic rankings.
//!
//! The consensus score of candidate i blends its mean similarity to the
//! other candidates with its similarity to the reference:
//!
//! ```text
//! score_i = ( Σ_{j≠i} R(S_i, S_j) + α·R(S_i, S*) ) / (N − 1 + α)
//! ```
//!
//! α = 0 ignores the reference entirely; α = ∞ collapses to the
//! reference-only score used by reference-anchored reranking. The reference
//! contributes to scoring only; it is never itself ranked.

use crate::metrics::{composite_rouge, RougeVariant};
use crate::pool::CandidatePool;
use crate::{real_of_usize, Error, Real, Result};

/// How candidates are scored: the reference weight α and the ROUGE variant.
///
/// α must be ≥ 0 and may be `T::infinity()`, which selects an exact
/// reference-only branch rather than approximating the limit with a large
/// float.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig<T> {
    alpha: T,
    variant: RougeVariant,
}

impl<T: Real> ScoringConfig<T> {
    pub fn new(alpha: T, variant: RougeVariant) -> Result<Self> {
        if alpha.is_nan() || alpha < T::zero() {
            return Err(Error::InvalidConfig(format!(
                "alpha must be >= 0 or infinity, got {alpha}"
            )));
        }
        Ok(Self { alpha, variant })
    }

    /// The reference-only limit (α = ∞).
    pub fn reference_only(variant: RougeVariant) -> Self {
        Self {
            alpha: T::infinity(),
            variant,
        }
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn variant(&self) -> RougeVariant {
        self.variant
    }
}

/// A descending-score ordering of candidate indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking<T> {
    /// Candidate indices from best to worst; ties keep ascending index.
    pub order: Vec<usize>,
    /// Scores aligned to the original candidate indices.
    pub scores: Vec<T>,
}

impl<T: Real> Ranking<T> {
    /// Scores re-ordered to follow `order` (best first).
    pub fn ranked_scores(&self) -> Vec<T> {
        self.order.iter().map(|&i| self.scores[i]).collect()
    }
}

/// Pairwise similarity matrix: entry (i, j) is the variant's ROUGE between
/// candidates i and j. Symmetric by construction; the diagonal is 1 by
/// convention and never consumed by scoring.
#[allow(clippy::needless_range_loop)] // triangular fill with mirrored writes
pub fn pairwise_rouge_matrix<T: Real>(
    pool: &CandidatePool<T>,
    variant: RougeVariant,
) -> Result<Vec<Vec<T>>> {
    pool.require_peers()?;
    let n = pool.len();
    let mut matrix = vec![vec![T::one(); n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let r = composite_rouge(pool.candidates[i].seq(), pool.candidates[j].seq(), variant);
            matrix[i][j] = r;
            matrix[j][i] = r;
        }
    }
    Ok(matrix)
}

/// Sums values in ascending order so the result is independent of the
/// candidates' positions in the pool.
fn ordered_sum<T: Real>(mut values: Vec<T>) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).expect("scores are never NaN"));
    values.into_iter().fold(T::zero(), |acc, v| acc + v)
}

/// Consensus score of every candidate under `cfg`.
pub fn consensus_score<T: Real>(pool: &CandidatePool<T>, cfg: &ScoringConfig<T>) -> Result<Vec<T>> {
    pool.require_peers()?;
    if cfg.alpha.is_infinite() {
        // Exact reference-only branch.
        return brio_score(pool, cfg.variant);
    }
    let reference = if cfg.alpha > T::zero() {
        Some(pool.require_reference()?)
    } else {
        None
    };
    let matrix = pairwise_rouge_matrix(pool, cfg.variant)?;
    let n = pool.len();
    let denom = real_of_usize::<T>(n - 1) + cfg.alpha;
    let scores = (0..n)
        .map(|i| {
            let peers: Vec<T> = (0..n).filter(|&j| j != i).map(|j| matrix[i][j]).collect();
            let mut total = ordered_sum(peers);
            if let Some(reference) = reference {
                total +=
                    cfg.alpha * composite_rouge(pool.candidates[i].seq(), reference, cfg.variant);
            }
            total / denom
        })
        .collect();
    Ok(scores)
}

/// Reference-only score: each candidate's ROUGE against the reference.
/// Identical to [`consensus_score`] with α = ∞.
pub fn brio_score<T: Real>(pool: &CandidatePool<T>, variant: RougeVariant) -> Result<Vec<T>> {
    let reference = pool.require_reference()?;
    Ok(pool
        .candidates
        .iter()
        .map(|c| composite_rouge(c.seq(), reference, variant))
        .collect())
}

/// Sorts indices by descending score; equal scores keep ascending index.
pub fn rank<T: Real>(scores: &[T]) -> Ranking<T> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .expect("scores are never NaN")
            .then(a.cmp(&b))
    });
    Ranking {
        order,
        scores: scores.to_vec(),
    }
}
