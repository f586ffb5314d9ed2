//! Monte-Carlo probe of the minority conjecture: in a large enough
//! candidate pool, corrupted facts are held by a minority, so consensus
//! scoring should prefer faithful candidates.
//!
//! Each trial builds a template of `num_slots` facts. The reference carries
//! every correct value; each candidate independently corrupts each slot with
//! probability `halluc_prob`, replacing the value with a uniformly random
//! distractor. Pools are then scored with the consensus score and the
//! resulting statistics aggregated across trials.

use serde::{Deserialize, Serialize};

use crate::metrics::RougeVariant;
use crate::pool::{Candidate, CandidatePool};
use crate::rng::{split_stream_seed, Xoshiro256PlusPlus};
use crate::scoring::{consensus_score, rank, ScoringConfig};
use crate::text::TokenSequence;
use crate::{real_of_usize, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<T> {
    /// Fact slots per summary.
    pub num_slots: usize,
    /// Values per slot: one correct plus `vocab_per_slot − 1` distractors.
    pub vocab_per_slot: usize,
    /// Per-slot corruption probability, in [0, 1).
    pub halluc_prob: T,
    pub pool_size: usize,
    pub trials: usize,
    /// Reference weight α of the scoring config.
    pub alpha: T,
    /// Similarity driving the consensus score.
    pub variant: RougeVariant,
    pub seed: u64,
}

impl<T: Real> SimConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.num_slots == 0 {
            return Err(Error::InvalidConfig("num_slots must be positive".into()));
        }
        if self.vocab_per_slot < 2 {
            return Err(Error::InvalidConfig(
                "vocab_per_slot must be at least 2 (one correct value plus a distractor)".into(),
            ));
        }
        if !(self.halluc_prob >= T::zero() && self.halluc_prob < T::one()) {
            return Err(Error::InvalidConfig(format!(
                "halluc_prob must lie in [0, 1), got {}",
                self.halluc_prob
            )));
        }
        if self.pool_size < 2 {
            return Err(Error::InvalidConfig("pool_size must be at least 2".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be positive".into()));
        }
        ScoringConfig::new(self.alpha, self.variant)?;
        Ok(())
    }

    fn scoring(&self) -> ScoringConfig<T> {
        ScoringConfig::new(self.alpha, self.variant).expect("validated")
    }
}

/// Aggregated statistics of one simulation run.
///
/// When either label class is empty (or scores have no variance) the
/// affected statistics are reported as 0 and `degenerate` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport<T> {
    /// Fraction of trials whose top-ranked candidate is faithful, among
    /// trials that have at least one faithful candidate.
    pub top1_faithful_rate: T,
    pub mean_score_faithful: T,
    pub mean_score_hallucinated: T,
    /// mean_score_faithful − mean_score_hallucinated.
    pub score_gap: T,
    /// Point-biserial correlation between the faithfulness label and the
    /// consensus score, over all candidates of all trials.
    pub rank_correlation: T,
    /// Trials excluded from `top1_faithful_rate` for lacking any faithful
    /// candidate.
    pub trials_without_faithful: usize,
    pub degenerate: bool,
}

fn value_token(slot: usize, value: usize) -> String {
    format!("s{slot}v{value}")
}

fn sequence_with_values(
    num_slots: usize,
    mut value_of: impl FnMut(usize) -> String,
) -> TokenSequence {
    let mut tokens = Vec::with_capacity(num_slots * 4);
    for slot in 0..num_slots {
        tokens.push("fact".to_owned());
        tokens.push(slot.to_string());
        tokens.push("is".to_owned());
        tokens.push(value_of(slot));
    }
    TokenSequence::from_tokens(tokens)
}

/// Builds the pool for one trial together with per-candidate faithfulness
/// labels. The per-trial RNG stream is derived from (seed, trial_index), so
/// trials are independent and individually reproducible.
pub fn generate_pool<T: Real>(
    cfg: &SimConfig<T>,
    trial_index: u64,
) -> (CandidatePool<T>, Vec<bool>) {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(split_stream_seed(cfg.seed, trial_index));
    let halluc_prob = cfg.halluc_prob.to_f64().expect("halluc_prob fits in f64");

    let source = sequence_with_values(cfg.num_slots, |_| "blank".to_owned());
    let reference = sequence_with_values(cfg.num_slots, |slot| value_token(slot, 0));

    let mut candidates = Vec::with_capacity(cfg.pool_size);
    let mut labels = Vec::with_capacity(cfg.pool_size);
    for _ in 0..cfg.pool_size {
        let mut faithful = true;
        let seq = sequence_with_values(cfg.num_slots, |slot| {
            if rng.chance(halluc_prob) {
                faithful = false;
                value_token(slot, 1 + rng.index(cfg.vocab_per_slot - 1))
            } else {
                value_token(slot, 0)
            }
        });
        candidates.push(Candidate::new(seq));
        labels.push(faithful);
    }

    (
        CandidatePool::new(source, Some(reference), candidates),
        labels,
    )
}

/// Point-biserial correlation between a binary label and a value, from
/// accumulated sums. Returns None when undefined (empty class or zero
/// variance).
fn point_biserial<T: Real>(
    sum_pos: T,
    n_pos: usize,
    sum_neg: T,
    n_neg: usize,
    sum_sq: T,
) -> Option<T> {
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let n = real_of_usize::<T>(n_pos + n_neg);
    let mean = (sum_pos + sum_neg) / n;
    let variance = sum_sq / n - mean * mean;
    if variance.is_nan() || variance <= T::zero() {
        return None;
    }
    let mean_pos = sum_pos / real_of_usize(n_pos);
    let mean_neg = sum_neg / real_of_usize(n_neg);
    let balance = (real_of_usize::<T>(n_pos) * real_of_usize::<T>(n_neg) / (n * n)).sqrt();
    Some((mean_pos - mean_neg) / variance.sqrt() * balance)
}

/// Runs the full simulation and aggregates the report deterministically
/// (trial order, then candidate order).
pub fn evaluate_conjecture<T: Real>(cfg: &SimConfig<T>) -> Result<SimReport<T>> {
    cfg.validate()?;
    let scoring = cfg.scoring();

    let mut top1_faithful = 0usize;
    let mut trials_without_faithful = 0usize;
    let mut sum_faithful = T::zero();
    let mut n_faithful = 0usize;
    let mut sum_halluc = T::zero();
    let mut n_halluc = 0usize;
    let mut sum_sq = T::zero();

    for trial in 0..cfg.trials as u64 {
        let (pool, labels) = generate_pool(cfg, trial);
        let scores = consensus_score(&pool, &scoring)?;
        let ranking = rank(&scores);

        if labels.iter().any(|&l| l) {
            if labels[ranking.order[0]] {
                top1_faithful += 1;
            }
        } else {
            trials_without_faithful += 1;
        }
        for (&score, &faithful) in scores.iter().zip(&labels) {
            if faithful {
                sum_faithful += score;
                n_faithful += 1;
            } else {
                sum_halluc += score;
                n_halluc += 1;
            }
            sum_sq += score * score;
        }
    }

    let rated_trials = cfg.trials - trials_without_faithful;
    let top1_faithful_rate = if rated_trials > 0 {
        real_of_usize::<T>(top1_faithful) / real_of_usize(rated_trials)
    } else {
        T::zero()
    };

    let degenerate = n_faithful == 0 || n_halluc == 0;
    let correlation = point_biserial(sum_faithful, n_faithful, sum_halluc, n_halluc, sum_sq);
    if degenerate || correlation.is_none() {
        return Ok(SimReport {
            top1_faithful_rate,
            mean_score_faithful: T::zero(),
            mean_score_hallucinated: T::zero(),
            score_gap: T::zero(),
            rank_correlation: T::zero(),
            trials_without_faithful,
            degenerate: true,
        });
    }

    let mean_score_faithful = sum_faithful / real_of_usize(n_faithful);
    let mean_score_hallucinated = sum_halluc / real_of_usize(n_halluc);
    Ok(SimReport {
        top1_faithful_rate,
        mean_score_faithful,
        mean_score_hallucinated,
        score_gap: mean_score_faithful - mean_score_hallucinated,
        rank_correlation: correlation.expect("checked above"),
        trials_without_faithful,
        degenerate: false,
    })
}
