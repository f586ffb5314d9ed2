//! Candidate pools: the unit of scoring, ranking, and loss.

use crate::text::TokenSequence;
use crate::{Error, Real, Result};

/// One candidate summary, optionally with per-token log-probabilities from
/// the model that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    seq: TokenSequence,
    token_logprobs: Option<Vec<T>>,
}

impl<T: Real> Candidate<T> {
    /// A candidate without probabilities; enough for scoring and ranking.
    pub fn new(seq: TokenSequence) -> Self {
        Self {
            seq,
            token_logprobs: None,
        }
    }

    /// A candidate with one log-probability per token. Lengths must match
    /// and every entry must be ≤ 0.
    pub fn with_logprobs(seq: TokenSequence, logprobs: Vec<T>) -> Result<Self> {
        Self::with_logprobs_at(0, seq, logprobs)
    }

    /// Same as [`Candidate::with_logprobs`] but reports `index` in errors,
    /// for callers validating whole pools.
    pub fn with_logprobs_at(index: usize, seq: TokenSequence, logprobs: Vec<T>) -> Result<Self> {
        if logprobs.len() != seq.len() {
            return Err(Error::LogProbLengthMismatch {
                candidate: index,
                expected: seq.len(),
                got: logprobs.len(),
            });
        }
        if let Some(bad) = logprobs.iter().find(|lp| **lp > T::zero()) {
            return Err(Error::PositiveLogProb {
                candidate: index,
                value: bad.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self {
            seq,
            token_logprobs: Some(logprobs),
        })
    }

    pub fn seq(&self) -> &TokenSequence {
        &self.seq
    }

    pub fn token_logprobs(&self) -> Option<&[T]> {
        self.token_logprobs.as_deref()
    }
}

/// A source document, an optional reference summary, and N candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool<T> {
    pub source: TokenSequence,
    pub reference: Option<TokenSequence>,
    pub candidates: Vec<Candidate<T>>,
}

impl<T: Real> CandidatePool<T> {
    pub fn new(
        source: TokenSequence,
        reference: Option<TokenSequence>,
        candidates: Vec<Candidate<T>>,
    ) -> Self {
        Self {
            source,
            reference,
            candidates,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// Errors unless the pool has the peers consensus scoring needs.
    pub fn require_peers(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InsufficientCandidates(self.len()));
        }
        Ok(())
    }

    pub fn require_reference(&self) -> Result<&TokenSequence> {
        self.reference.as_ref().ok_or(Error::MissingReference)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logprob_length_must_match_tokens() {
        let seq = TokenSequence::new("a b c");
        let err = Candidate::<f64>::with_logprobs(seq, vec![-1.0, -2.0]).unwrap_err();
        assert_eq!(
            err,
            Error::LogProbLengthMismatch {
                candidate: 0,
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn positive_logprob_rejected() {
        let seq = TokenSequence::new("a b");
        let err = Candidate::<f64>::with_logprobs(seq, vec![-1.0, 0.5]).unwrap_err();
        assert!(matches!(err, Error::PositiveLogProb { candidate: 0, .. }));
    }

    #[test]
    fn zero_logprob_is_allowed() {
        let seq = TokenSequence::new("a");
        assert!(Candidate::<f64>::with_logprobs(seq, vec![0.0]).is_ok());
    }

    #[test]
    fn lone_candidate_has_no_peers() {
        let pool = CandidatePool::<f64>::new(
            TokenSequence::new("src"),
            None,
            vec![Candidate::new(TokenSequence::new("only"))],
        );
        assert_eq!(
            pool.require_peers().unwrap_err(),
            Error::InsufficientCandidates(1)
        );
    }
}
