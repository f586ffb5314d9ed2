//! Rank-margin contrastive loss, its combination with cross-entropy, and
//! gradient verification.
//!
//! Candidates enter in rank order (descending consensus score). For every
//! pair of ranks i < j the loss demands that the better-ranked candidate's
//! length-normalized log-probability beat the worse one's by a margin:
//!
//! ```text
//! L_ctr = Σ_{i<j} max(0, f_j − f_i + λ_ij)
//! ```
//!
//! with λ_ij either `(j − i)·λ` (fixed) or `(score_i − score_j)·λ`
//! (difference). The total training objective is `L_xent + γ·L_ctr`.

use serde::{Deserialize, Serialize};

use crate::pool::Candidate;
use crate::{real, real_of_usize, Error, Real, Result};

/// Margin scheme between two ranked candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarginScheme {
    /// λ_ij grows with rank distance: (j − i)·λ.
    Fixed,
    /// λ_ij grows with the score gap: (score_i − score_j)·λ.
    Difference,
}

impl std::fmt::Display for MarginScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MarginScheme::Fixed => "fixed",
            MarginScheme::Difference => "difference",
        })
    }
}

impl std::str::FromStr for MarginScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(MarginScheme::Fixed),
            "difference" => Ok(MarginScheme::Difference),
            other => Err(Error::InvalidConfig(format!(
                "unknown margin scheme {other:?}; expected fixed or difference"
            ))),
        }
    }
}

/// Margin scheme plus its scale λ > 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginSpec<T> {
    scheme: MarginScheme,
    lambda: T,
}

impl<T: Real> MarginSpec<T> {
    pub fn new(scheme: MarginScheme, lambda: T) -> Result<Self> {
        if lambda.is_nan() || lambda <= T::zero() || lambda.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a positive finite real, got {lambda}"
            )));
        }
        Ok(Self { scheme, lambda })
    }

    pub fn scheme(&self) -> MarginScheme {
        self.scheme
    }

    pub fn lambda(&self) -> T {
        self.lambda
    }
}

/// Weights of the combined objective: γ on the contrastive term, β the
/// length-penalty exponent inside f-values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig<T> {
    pub gamma: T,
    pub beta: T,
}

impl<T: Real> LossConfig<T> {
    pub fn new(gamma: T, beta: T) -> Result<Self> {
        for (name, v) in [("gamma", gamma), ("beta", beta)] {
            if v.is_nan() || v < T::zero() || v.is_infinite() {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be a non-negative finite real, got {v}"
                )));
            }
        }
        Ok(Self { gamma, beta })
    }
}

/// The pieces of one evaluation of the combined objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    pub xent: T,
    pub ctr: T,
    pub total: T,
}

/// Length-normalized log-probability: (Σ_t logprob_t) / |c|^β.
pub fn f_value<T: Real>(candidate: &Candidate<T>, beta: T) -> Result<T> {
    let logprobs = candidate.token_logprobs().ok_or(Error::MissingLogProbs)?;
    if logprobs.is_empty() {
        return Err(Error::EmptyLogProbs);
    }
    Ok(f_value_of_logprobs(logprobs, beta))
}

/// [`f_value`] over a raw log-probability slice (must be nonempty).
pub fn f_value_of_logprobs<T: Real>(logprobs: &[T], beta: T) -> T {
    debug_assert!(!logprobs.is_empty());
    let sum = logprobs.iter().copied().fold(T::zero(), |acc, lp| acc + lp);
    sum / real_of_usize::<T>(logprobs.len()).powf(beta)
}

/// ∂f/∂logprob_t = 1/|c|^β, the chain factor from a candidate's f-value to
/// each of its token log-probabilities.
pub fn f_value_token_grad<T: Real>(token_count: usize, beta: T) -> T {
    T::one() / real_of_usize::<T>(token_count).powf(beta)
}

/// The target margin λ_ij between rank positions i < j (0-based, aligned
/// with `scores_ranked`, which must be descending).
pub fn margin<T: Real>(i: usize, j: usize, scores_ranked: &[T], m: &MarginSpec<T>) -> Result<T> {
    if i >= j {
        return Err(Error::BadRankPair { i, j });
    }
    Ok(match m.scheme {
        MarginScheme::Fixed => real_of_usize::<T>(j - i) * m.lambda,
        MarginScheme::Difference => (scores_ranked[i] - scores_ranked[j]) * m.lambda,
    })
}

fn check_ranked_inputs<T: Real>(f_ranked: &[T], scores_ranked: &[T]) -> Result<()> {
    if f_ranked.len() != scores_ranked.len() {
        return Err(Error::RankLengthMismatch {
            f_values: f_ranked.len(),
            scores: scores_ranked.len(),
        });
    }
    if f_ranked.len() < 2 {
        return Err(Error::InsufficientCandidates(f_ranked.len()));
    }
    Ok(())
}

/// Whether a pair participates in the loss. Under fixed margins, exactly
/// tied scores are skipped: a positive margin between genuinely tied
/// candidates would impose an arbitrary, untrainable ordering.
fn pair_active<T: Real>(i: usize, j: usize, scores_ranked: &[T], m: &MarginSpec<T>) -> bool {
    m.scheme != MarginScheme::Fixed || scores_ranked[i] != scores_ranked[j]
}

/// Contrastive loss over all rank pairs: Σ_{i<j} max(0, f_j − f_i + λ_ij).
pub fn ctr_loss<T: Real>(f_ranked: &[T], scores_ranked: &[T], m: &MarginSpec<T>) -> Result<T> {
    check_ranked_inputs(f_ranked, scores_ranked)?;
    let n = f_ranked.len();
    let mut total = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            if !pair_active(i, j, scores_ranked, m) {
                continue;
            }
            let hinge = f_ranked[j] - f_ranked[i] + margin(i, j, scores_ranked, m)?;
            if hinge > T::zero() {
                total += hinge;
            }
        }
    }
    Ok(total)
}

/// Subgradient of [`ctr_loss`] with respect to each ranked f-value.
///
/// Every strictly active pair (i, j) contributes −1 to position i and +1 to
/// position j; pairs sitting exactly on the kink contribute 0, which keeps
/// the components summing to 0 exactly.
pub fn ctr_loss_grad<T: Real>(
    f_ranked: &[T],
    scores_ranked: &[T],
    m: &MarginSpec<T>,
) -> Result<Vec<T>> {
    check_ranked_inputs(f_ranked, scores_ranked)?;
    let n = f_ranked.len();
    let mut grad = vec![T::zero(); n];
    for i in 0..n {
        for j in (i + 1)..n {
            if !pair_active(i, j, scores_ranked, m) {
                continue;
            }
            let hinge = f_ranked[j] - f_ranked[i] + margin(i, j, scores_ranked, m)?;
            if hinge > T::zero() {
                grad[i] -= T::one();
                grad[j] += T::one();
            }
        }
    }
    Ok(grad)
}

/// Combines the two objective terms: total = xent + γ·ctr.
pub fn combined_loss<T: Real>(xent: T, ctr: T, cfg: &LossConfig<T>) -> LossBreakdown<T> {
    LossBreakdown {
        xent,
        ctr,
        total: xent + cfg.gamma * ctr,
    }
}

/// Checks the analytic gradient against central finite differences.
///
/// Returns the maximum over coordinates of
/// |analytic − numeric| / max(1, |analytic|). Errors if any pair's hinge
/// argument is within 10·ε of zero, where the subgradient and the numeric
/// quotient legitimately disagree.
pub fn grad_check<T: Real>(
    point: &[T],
    scores_ranked: &[T],
    m: &MarginSpec<T>,
    epsilon: T,
) -> Result<T> {
    check_ranked_inputs(point, scores_ranked)?;
    let n = point.len();
    let limit = real::<T>(10.0) * epsilon;
    for i in 0..n {
        for j in (i + 1)..n {
            if !pair_active(i, j, scores_ranked, m) {
                continue;
            }
            let hinge = point[j] - point[i] + margin(i, j, scores_ranked, m)?;
            if hinge.abs() < limit {
                return Err(Error::KinkProximity {
                    i,
                    j,
                    limit: limit.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
    }

    let analytic = ctr_loss_grad(point, scores_ranked, m)?;
    let mut worst = T::zero();
    let mut probe = point.to_vec();
    for k in 0..n {
        probe[k] = point[k] + epsilon;
        let plus = ctr_loss(&probe, scores_ranked, m)?;
        probe[k] = point[k] - epsilon;
        let minus = ctr_loss(&probe, scores_ranked, m)?;
        probe[k] = point[k];
        let numeric = (plus - minus) / (real::<T>(2.0) * epsilon);
        let rel = (numeric - analytic[k]).abs() / T::one().max(analytic[k].abs());
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::TokenSequence;

    fn spec(scheme: MarginScheme, lambda: f64) -> MarginSpec<f64> {
        MarginSpec::new(scheme, lambda).unwrap()
    }

    #[test]
    fn f_value_hand_examples() {
        let seq = TokenSequence::new("a b c");
        let c = Candidate::with_logprobs(seq, vec![-2.0, -2.0, -2.0]).unwrap();
        assert_eq!(f_value(&c, 1.0).unwrap(), -2.0);
        assert_eq!(f_value(&c, 0.0).unwrap(), -6.0);

        let single = Candidate::with_logprobs(TokenSequence::new("a"), vec![-3.5]).unwrap();
        assert_eq!(f_value(&single, 0.7).unwrap(), -3.5);
    }

    #[test]
    fn f_value_requires_logprobs() {
        let bare = Candidate::<f64>::new(TokenSequence::new("a b"));
        assert_eq!(f_value(&bare, 1.0).unwrap_err(), Error::MissingLogProbs);
        let empty = Candidate::with_logprobs(TokenSequence::new(""), vec![]).unwrap();
        assert_eq!(f_value(&empty, 1.0).unwrap_err(), Error::EmptyLogProbs);
    }

    #[test]
    fn margin_hand_examples() {
        // Rank positions are 0-based here; ranks 1 and 3 in one-based terms.
        let scores = [0.9, 0.8, 0.7];
        let fixed = spec(MarginScheme::Fixed, 0.01);
        assert_eq!(margin(0, 2, &scores, &fixed).unwrap(), 0.02);

        let diff = spec(MarginScheme::Difference, 0.1);
        assert_eq!(margin(0, 1, &[0.6, 0.4], &diff).unwrap(), (0.6 - 0.4) * 0.1);
        assert_eq!(margin(0, 1, &[0.5, 0.5], &diff).unwrap(), 0.0);
    }

    #[test]
    fn margin_rejects_bad_pair() {
        let scores = [0.9, 0.8];
        let m = spec(MarginScheme::Fixed, 0.1);
        assert_eq!(
            margin(1, 1, &scores, &m).unwrap_err(),
            Error::BadRankPair { i: 1, j: 1 }
        );
    }

    #[test]
    fn ctr_loss_inactive_when_gaps_exceed_margins() {
        let f = [-1.0, -2.0, -3.0];
        let scores = [0.9, 0.5, 0.1];
        let m = spec(MarginScheme::Fixed, 0.01);
        assert_eq!(ctr_loss(&f, &scores, &m).unwrap(), 0.0);
        assert_eq!(ctr_loss_grad(&f, &scores, &m).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn ctr_loss_two_tied_f_values() {
        let f = [-1.0, -1.0];
        let scores = [0.9, 0.1];
        let m = spec(MarginScheme::Fixed, 0.5);
        assert_eq!(ctr_loss(&f, &scores, &m).unwrap(), 0.5);
        assert_eq!(ctr_loss_grad(&f, &scores, &m).unwrap(), vec![-1.0, 1.0]);
    }

    #[test]
    fn ctr_loss_three_candidate_worked_example() {
        let f = [-1.0, -0.9, -1.2];
        let scores = [0.6, 0.5, 0.4];
        let m = spec(MarginScheme::Difference, 0.1);
        let loss = ctr_loss(&f, &scores, &m).unwrap();
        // Only the (0, 1) pair is active: hinge = (f1 − f0) + (s0 − s1)·λ.
        let expected = (-0.9 - -1.0) + (0.6 - 0.5) * 0.1;
        assert_eq!(loss, expected);
        assert!((loss - 0.11).abs() < 1e-15);
        assert_eq!(
            ctr_loss_grad(&f, &scores, &m).unwrap(),
            vec![-1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn ctr_loss_needs_two_candidates() {
        let m = spec(MarginScheme::Fixed, 0.1);
        assert_eq!(
            ctr_loss(&[-1.0], &[0.5], &m).unwrap_err(),
            Error::InsufficientCandidates(1)
        );
        assert_eq!(
            ctr_loss(&[-1.0, -2.0], &[0.5], &m).unwrap_err(),
            Error::RankLengthMismatch {
                f_values: 2,
                scores: 1
            }
        );
    }

    #[test]
    fn fixed_margin_skips_exactly_tied_scores() {
        let f = [-1.0, -1.0, -5.0];
        let scores = [0.5, 0.5, 0.1];
        let m = spec(MarginScheme::Fixed, 0.3);
        // Pair (0, 1) is tied and skipped; pairs with rank 2 are inactive
        // because f already separates them.
        assert_eq!(ctr_loss(&f, &scores, &m).unwrap(), 0.0);
        // Difference margins keep the pair but its margin is zero.
        let d = spec(MarginScheme::Difference, 0.3);
        assert_eq!(ctr_loss(&f, &scores, &d).unwrap(), 0.0);
    }

    #[test]
    fn combined_loss_hand_examples() {
        let cfg = LossConfig::new(50.0, 1.0).unwrap();
        let b = combined_loss(2.0, 0.11, &cfg);
        assert_eq!(b.total, 7.5);
        assert_eq!(b.xent, 2.0);
        assert_eq!(b.ctr, 0.11);

        let pure_mle = LossConfig::new(0.0, 1.0).unwrap();
        assert_eq!(combined_loss(2.0, 0.11, &pure_mle).total, 2.0);
        assert_eq!(combined_loss(0.0, 0.0, &cfg).total, 0.0);
    }

    #[test]
    fn grad_check_worked_example() {
        let f = [-1.0, -0.9, -1.2];
        let scores = [0.6, 0.5, 0.4];
        let m = spec(MarginScheme::Difference, 0.1);
        let err = grad_check(&f, &scores, &m, 1e-6).unwrap();
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn grad_check_zero_loss_region() {
        let f = [-1.0, -2.0, -3.0];
        let scores = [0.9, 0.5, 0.1];
        let m = spec(MarginScheme::Fixed, 0.01);
        assert_eq!(grad_check(&f, &scores, &m, 1e-6).unwrap(), 0.0);
    }

    #[test]
    fn grad_check_detects_kink() {
        // f1 − f0 + (j − i)·λ = 0 exactly.
        let f = [-1.0, -1.5];
        let scores = [0.9, 0.1];
        let m = spec(MarginScheme::Fixed, 0.5);
        assert!(matches!(
            grad_check(&f, &scores, &m, 1e-6).unwrap_err(),
            Error::KinkProximity { .. }
        ));
    }

    #[test]
    fn invalid_configs_rejected() {
        assert!(MarginSpec::new(MarginScheme::Fixed, 0.0).is_err());
        assert!(MarginSpec::new(MarginScheme::Fixed, -1.0).is_err());
        assert!(MarginSpec::new(MarginScheme::Fixed, f64::NAN).is_err());
        assert!(LossConfig::new(-1.0, 0.0).is_err());
        assert!(LossConfig::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn gradient_components_sum_to_zero() {
        let f = [-0.4, -1.3, -0.2, -2.0];
        let scores = [0.8, 0.6, 0.5, 0.2];
        for scheme in [MarginScheme::Fixed, MarginScheme::Difference] {
            let m = spec(scheme, 0.05);
            let g = ctr_loss_grad(&f, &scores, &m).unwrap();
            assert_eq!(g.iter().sum::<f64>(), 0.0);
        }
    }
}
