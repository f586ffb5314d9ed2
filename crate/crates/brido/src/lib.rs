//! Consensus reranking and contrastive training machinery for summarization
//! candidates.
//!
//! The crate covers the full pipeline at desk scale:
//!
//! - [`text`]: tokenization and token sequences.
//! - [`metrics`]: ROUGE-1/2/L and the composite ranking variants.
//! - [`pool`]: candidate pools (source, optional reference, N candidates).
//! - [`scoring`]: inter-candidate consensus scores, the reference-only
//!   limit, and deterministic rankings.
//! - [`loss`]: the rank-margin contrastive loss, its combination with
//!   cross-entropy, analytic gradients, and finite-difference checking.
//! - [`beam`]: diverse beam search over a pluggable next-token model.
//! - [`toy`]: a trainable conditional-bigram model that exercises the full
//!   multi-task objective end to end.
//! - [`sim`]: a Monte-Carlo simulator probing whether consensus scoring
//!   down-ranks candidates that corrupt facts.
//!
//! Numeric code is generic over the scalar type through [`Real`]; the
//! aliases at the crate root pin everything to `f64`, which is what the CLI
//! and all file formats use.

pub mod beam;
pub mod error;
pub mod loss;
pub mod metrics;
pub mod pool;
pub mod rng;
pub mod scoring;
pub mod sim;
pub mod stats;
pub mod text;
pub mod toy;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

pub use error::{Error, Result};

/// Scalar bound for all numeric code in this crate.
///
/// Implemented automatically for any floating-point type that satisfies the
/// component traits, in particular `f32` and `f64`.
pub trait Real:
    Float
    + FromPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Sum
        + Debug
        + Display
        + 'static
{
}

/// Converts an exactly-representable constant into the working scalar.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in every Real type")
}

/// Converts a count into the working scalar.
pub(crate) fn real_of_usize<T: Real>(n: usize) -> T {
    T::from_usize(n).expect("count representable in every Real type")
}

/// Default scalar for the CLI, file formats, and acceptance tests.
pub type Scalar = f64;

pub type RougeScore = metrics::RougeScore<Scalar>;
pub type Candidate = pool::Candidate<Scalar>;
pub type CandidatePool = pool::CandidatePool<Scalar>;
pub type ScoringConfig = scoring::ScoringConfig<Scalar>;
pub type Ranking = scoring::Ranking<Scalar>;
pub type MarginSpec = loss::MarginSpec<Scalar>;
pub type LossConfig = loss::LossConfig<Scalar>;
pub type LossBreakdown = loss::LossBreakdown<Scalar>;
pub type BeamConfig = beam::BeamConfig<Scalar>;
pub type DecodedCandidate = beam::DecodedCandidate<Scalar>;
pub type ToyModel = toy::ToyModel<Scalar>;
pub type TrainConfig = toy::TrainConfig<Scalar>;
pub type SimConfig = sim::SimConfig<Scalar>;
pub type SimReport = sim::SimReport<Scalar>;
