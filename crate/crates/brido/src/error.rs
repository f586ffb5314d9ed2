//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Consensus scoring needs peers; a lone candidate has none.
    #[error("pool has {0} candidate(s); consensus scoring needs at least 2")]
    InsufficientCandidates(usize),

    /// Scoring with `alpha > 0` blends in the reference, so it must exist.
    #[error("scoring with alpha > 0 requires a reference")]
    MissingReference,

    #[error("candidate has no token log-probabilities")]
    MissingLogProbs,

    #[error("candidate has an empty token log-probability list")]
    EmptyLogProbs,

    #[error("candidate {candidate}: {got} log-probabilities for {expected} tokens")]
    LogProbLengthMismatch {
        candidate: usize,
        expected: usize,
        got: usize,
    },

    #[error("candidate {candidate}: log-probability {value} is positive")]
    PositiveLogProb { candidate: usize, value: f64 },

    #[error("rank pair requires i < j, got i={i}, j={j}")]
    BadRankPair { i: usize, j: usize },

    #[error("{f_values} f-values do not align with {scores} scores")]
    RankLengthMismatch { f_values: usize, scores: usize },

    /// The point sits too close to a hinge kink for finite differences to be
    /// trustworthy; the caller should resample.
    #[error("pair ({i}, {j}) is within {limit} of a hinge kink; resample the point")]
    KinkProximity { i: usize, j: usize, limit: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Every continuation has probability zero, so the search cannot fill
    /// its beam.
    #[error("no viable continuation at step {step} (all probabilities zero)")]
    NoViableToken { step: usize },

    #[error("token {0:?} is not in the vocabulary")]
    UnknownToken(String),

    #[error("vocabulary must hold BOS, EOS and at least one content token, got {0}")]
    VocabularyTooSmall(usize),

    /// Generated text has to survive re-tokenization, so content tokens are
    /// restricted to lowercase alphanumeric words.
    #[error("content token {0:?} is not a lowercase alphanumeric word")]
    InvalidContentToken(String),

    #[error("unsupported model file version {0}")]
    UnsupportedModelVersion(u32),
}
