//! ROUGE lexical similarity between arbitrary token sequences.
//!
//! ROUGE is conventionally a candidate-vs-reference metric; everything here
//! works between any two sequences, which is what inter-candidate scoring
//! needs. All downstream consumers use the f-measure field.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::text::TokenSequence;
use crate::{real, real_of_usize, Real};

/// Precision, recall, and balanced f-measure of one overlap computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RougeScore<T> {
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Real> RougeScore<T> {
    pub fn zero() -> Self {
        Self {
            precision: T::zero(),
            recall: T::zero(),
            f1: T::zero(),
        }
    }

    /// Builds a score from an overlap count and the two gram totals.
    ///
    /// Each field is a single rounding of the exact rational: p = o/na,
    /// r = o/nb, and f1 = 2·p·r/(p+r) simplifies to 2o/(na+nb) for counted
    /// overlaps. Zero totals on either side yield an all-zero score.
    pub fn from_overlap(overlap: usize, total_a: usize, total_b: usize) -> Self {
        if total_a == 0 || total_b == 0 {
            return Self::zero();
        }
        let o = real_of_usize::<T>(overlap);
        Self {
            precision: o / real_of_usize(total_a),
            recall: o / real_of_usize(total_b),
            f1: (real::<T>(2.0) * o) / real_of_usize(total_a + total_b),
        }
    }
}

/// Harmonic mean used by f-measures: 2xy/(x+y), or 0 when both are 0.
pub fn harmonic_mean<T: Real>(x: T, y: T) -> T {
    if x + y > T::zero() {
        real::<T>(2.0) * x * y / (x + y)
    } else {
        T::zero()
    }
}

/// Which ROUGE quantity drives a ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RougeVariant {
    /// Unigram overlap f-measure.
    R1,
    /// Bigram overlap f-measure.
    R2,
    /// Longest-common-subsequence f-measure.
    Rl,
    /// 2·R1·R2/(R1+R2), the composite used for highly abstractive corpora.
    HarmonicR1R2,
    /// (R1+R2+RL)/3, the composite used for more extractive corpora.
    MeanR1R2Rl,
}

impl RougeVariant {
    pub const ALL: [RougeVariant; 5] = [
        RougeVariant::R1,
        RougeVariant::R2,
        RougeVariant::Rl,
        RougeVariant::HarmonicR1R2,
        RougeVariant::MeanR1R2Rl,
    ];

    /// Combines precomputed R-1/R-2/R-L f-measures into the variant's value.
    pub fn combine<T: Real>(self, r1: T, r2: T, rl: T) -> T {
        match self {
            RougeVariant::R1 => r1,
            RougeVariant::R2 => r2,
            RougeVariant::Rl => rl,
            RougeVariant::HarmonicR1R2 => harmonic_mean(r1, r2),
            RougeVariant::MeanR1R2Rl => (r1 + r2 + rl) / real(3.0),
        }
    }
}

impl std::fmt::Display for RougeVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            RougeVariant::R1 => "r1",
            RougeVariant::R2 => "r2",
            RougeVariant::Rl => "rl",
            RougeVariant::HarmonicR1R2 => "harmonic-r1-r2",
            RougeVariant::MeanR1R2Rl => "mean-r1-r2-rl",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for RougeVariant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "r1" => Ok(RougeVariant::R1),
            "r2" => Ok(RougeVariant::R2),
            "rl" => Ok(RougeVariant::Rl),
            "harmonic-r1-r2" => Ok(RougeVariant::HarmonicR1R2),
            "mean-r1-r2-rl" => Ok(RougeVariant::MeanR1R2Rl),
            other => Err(crate::Error::InvalidConfig(format!(
                "unknown rouge variant {other:?}; expected one of \
                 r1, r2, rl, harmonic-r1-r2, mean-r1-r2-rl"
            ))),
        }
    }
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n == 0 || tokens.len() < n {
        return counts;
    }
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// ROUGE-N: clipped n-gram overlap. Each distinct n-gram counts
/// min(count_a, count_b) times.
pub fn rouge_n<T: Real>(a: &TokenSequence, b: &TokenSequence, n: usize) -> RougeScore<T> {
    assert!(n >= 1, "rouge_n needs n >= 1");
    let counts_a = ngram_counts(a.tokens(), n);
    let counts_b = ngram_counts(b.tokens(), n);
    let overlap: usize = counts_a
        .iter()
        .map(|(gram, &ca)| ca.min(counts_b.get(gram).copied().unwrap_or(0)))
        .sum();
    let total = |tokens: &[String]| tokens.len().saturating_sub(n - 1);
    RougeScore::from_overlap(overlap, total(a.tokens()), total(b.tokens()))
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    // Two-row DP over the standard LCS recurrence.
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj {
                prev[j] + 1
            } else {
                prev[j + 1].max(cur[j])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L: longest common subsequence, normalized by each side's length.
pub fn rouge_l<T: Real>(a: &TokenSequence, b: &TokenSequence) -> RougeScore<T> {
    RougeScore::from_overlap(lcs_len(a.tokens(), b.tokens()), a.len(), b.len())
}

/// The variant's similarity between two sequences.
///
/// Computes only the sub-scores the variant needs; this sits on the hot path
/// of the O(N²) pairwise matrix.
pub fn composite_rouge<T: Real>(a: &TokenSequence, b: &TokenSequence, v: RougeVariant) -> T {
    match v {
        RougeVariant::R1 => rouge_n::<T>(a, b, 1).f1,
        RougeVariant::R2 => rouge_n::<T>(a, b, 2).f1,
        RougeVariant::Rl => rouge_l::<T>(a, b).f1,
        RougeVariant::HarmonicR1R2 => {
            harmonic_mean(rouge_n::<T>(a, b, 1).f1, rouge_n::<T>(a, b, 2).f1)
        }
        RougeVariant::MeanR1R2Rl => v.combine(
            rouge_n::<T>(a, b, 1).f1,
            rouge_n::<T>(a, b, 2).f1,
            rouge_l::<T>(a, b).f1,
        ),
    }
}
