//! Diverse beam search over a pluggable next-token model.
//!
//! The beam is split into `num_groups` groups of equal width. At every
//! timestep the groups expand in fixed order; within a group the expansion
//! is standard beam search on cumulative log-probability, but each token w
//! is penalized at selection time by `eta` times the number of times w was
//! chosen at the same timestep by the groups already expanded. Penalties
//! steer selection only: the scores a hypothesis accumulates, and the
//! per-token log-probabilities it reports, are always the model's true
//! values.

use std::collections::HashMap;

use crate::pool::Candidate;
use crate::text::TokenSequence;
use crate::{loss, real_of_usize, Error, Real, Result};

/// A conditional next-token distribution with a designated BOS/EOS pair.
///
/// Content tokens (everything except BOS and EOS) must be lowercase
/// alphanumeric words, since generated sequences are re-tokenized
/// downstream. Returned log-probabilities must cover the whole vocabulary
/// and exponentiate to a distribution summing to 1 within 1e-9.
pub trait NextTokenModel<T: Real> {
    fn vocab(&self) -> &[String];
    fn bos_id(&self) -> usize;
    fn eos_id(&self) -> usize;
    /// Log-probabilities of every vocabulary token given the source and the
    /// generated prefix (token ids, BOS implied in front).
    fn next_log_probs(&self, source: &TokenSequence, prefix: &[usize]) -> Vec<T>;
}

/// Search geometry and penalties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig<T> {
    eta: T,
    num_groups: usize,
    num_candidates: usize,
    max_length: usize,
    beta: T,
}

impl<T: Real> BeamConfig<T> {
    /// `num_candidates` total beams in `num_groups` equal groups, diversity
    /// penalty `eta`, at most `max_length` generated tokens, and final
    /// ordering by f-value with length exponent `beta`.
    pub fn new(
        eta: T,
        num_groups: usize,
        num_candidates: usize,
        max_length: usize,
        beta: T,
    ) -> Result<Self> {
        if eta.is_nan() || eta < T::zero() || eta.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "eta must be a non-negative finite real, got {eta}"
            )));
        }
        if beta.is_nan() || beta < T::zero() || beta.is_infinite() {
            return Err(Error::InvalidConfig(format!(
                "beta must be a non-negative finite real, got {beta}"
            )));
        }
        if num_groups == 0 || num_candidates == 0 || max_length == 0 {
            return Err(Error::InvalidConfig(
                "num_groups, num_candidates and max_length must be positive".into(),
            ));
        }
        if !num_candidates.is_multiple_of(num_groups) {
            return Err(Error::InvalidConfig(format!(
                "num_candidates ({num_candidates}) must be a multiple of num_groups ({num_groups})"
            )));
        }
        Ok(Self {
            eta,
            num_groups,
            num_candidates,
            max_length,
            beta,
        })
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn num_groups(&self) -> usize {
        self.num_groups
    }

    pub fn num_candidates(&self) -> usize {
        self.num_candidates
    }

    pub fn max_length(&self) -> usize {
        self.max_length
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn group_width(&self) -> usize {
        self.num_candidates / self.num_groups
    }
}

/// One search result with its group/slot provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedCandidate<T> {
    pub candidate: Candidate<T>,
    /// Beam group the hypothesis came from.
    pub group: usize,
    /// Slot within the group after the final expansion.
    pub slot: usize,
    /// Length-penalized f-value used for the final ordering.
    pub f: T,
}

#[derive(Debug, Clone)]
struct Hypothesis<T> {
    tokens: Vec<usize>,
    step_logprobs: Vec<T>,
    /// True cumulative log-probability, including the EOS step once
    /// finished.
    cum: T,
    finished: bool,
}

impl<T: Real> Hypothesis<T> {
    fn seed() -> Self {
        Self {
            tokens: Vec::new(),
            step_logprobs: Vec::new(),
            cum: T::zero(),
            finished: false,
        }
    }
}

/// A candidate move during one group expansion: either carry a finished
/// hypothesis forward or extend a live one by a token.
struct Move<T> {
    selection: T,
    origin: usize,
    token: Option<usize>,
    logprob: T,
}

/// Runs diverse beam search and returns exactly `num_candidates` candidates
/// ordered by descending f-value (ties keep group, then slot order). Every
/// candidate carries its true per-token log-probabilities, so re-scoring its
/// tokens through the model reproduces them.
pub fn diverse_beam_search<T: Real, M: NextTokenModel<T>>(
    model: &M,
    source: &TokenSequence,
    cfg: &BeamConfig<T>,
) -> Result<Vec<DecodedCandidate<T>>> {
    let vocab_len = model.vocab().len();
    if vocab_len < 3 {
        return Err(Error::VocabularyTooSmall(vocab_len));
    }
    let bos = model.bos_id();
    let eos = model.eos_id();
    let width = cfg.group_width();
    // BOS is never generated and EOS is masked on the first step, so only
    // vocab − 2 first tokens exist to tell beams apart.
    if width > vocab_len - 2 {
        return Err(Error::InvalidConfig(format!(
            "group width {width} exceeds the {} distinct first tokens the vocabulary offers",
            vocab_len - 2
        )));
    }

    let mut groups: Vec<Vec<Hypothesis<T>>> = vec![vec![Hypothesis::seed()]; cfg.num_groups];

    for step in 0..cfg.max_length {
        if groups.iter().all(|g| g.iter().all(|h| h.finished)) {
            break;
        }
        // Tokens chosen at this timestep by groups already expanded.
        let mut step_counts: HashMap<usize, usize> = HashMap::new();
        for group in groups.iter_mut() {
            if group.iter().all(|h| h.finished) {
                continue;
            }
            let mut moves: Vec<Move<T>> = Vec::new();
            for (origin, hyp) in group.iter().enumerate() {
                if hyp.finished {
                    moves.push(Move {
                        selection: hyp.cum,
                        origin,
                        token: None,
                        logprob: T::zero(),
                    });
                    continue;
                }
                let logprobs = model.next_log_probs(source, &hyp.tokens);
                debug_assert_eq!(logprobs.len(), vocab_len);
                debug_assert!(
                    (logprobs
                        .iter()
                        .map(|lp| lp.exp())
                        .fold(T::zero(), |a, p| a + p)
                        - T::one())
                    .abs()
                        < crate::real(1e-9),
                    "model log-probabilities must be normalized"
                );
                for (token, &lp) in logprobs.iter().enumerate() {
                    if token == bos || (token == eos && step == 0) {
                        continue;
                    }
                    if lp == T::neg_infinity() {
                        continue;
                    }
                    let penalty = match step_counts.get(&token) {
                        Some(&count) => cfg.eta * real_of_usize(count),
                        None => T::zero(),
                    };
                    moves.push(Move {
                        selection: hyp.cum + lp - penalty,
                        origin,
                        token: Some(token),
                        logprob: lp,
                    });
                }
            }
            if moves.len() < width {
                return Err(Error::NoViableToken { step });
            }
            // Stable sort: ties fall back to enumeration order, which is
            // (origin, carry-over, token) — deterministic by construction.
            moves.sort_by(|a, b| {
                b.selection
                    .partial_cmp(&a.selection)
                    .expect("selection scores are never NaN")
            });
            let mut next: Vec<Hypothesis<T>> = Vec::with_capacity(width);
            for mv in moves.into_iter().take(width) {
                let hyp = &group[mv.origin];
                match mv.token {
                    None => next.push(hyp.clone()),
                    Some(token) => {
                        *step_counts.entry(token).or_insert(0) += 1;
                        let mut new_hyp = hyp.clone();
                        new_hyp.cum += mv.logprob;
                        if token == eos {
                            new_hyp.finished = true;
                        } else {
                            new_hyp.tokens.push(token);
                            new_hyp.step_logprobs.push(mv.logprob);
                        }
                        next.push(new_hyp);
                    }
                }
            }
            *group = next;
        }
    }

    let vocab = model.vocab();
    let mut decoded: Vec<DecodedCandidate<T>> = Vec::with_capacity(cfg.num_candidates);
    for (group_idx, group) in groups.iter().enumerate() {
        for (slot, hyp) in group.iter().enumerate() {
            let tokens: Vec<String> = hyp.tokens.iter().map(|&id| vocab[id].clone()).collect();
            let seq = TokenSequence::from_tokens(tokens);
            let f = loss::f_value_of_logprobs(&hyp.step_logprobs, cfg.beta);
            let candidate = Candidate::with_logprobs(seq, hyp.step_logprobs.clone())?;
            decoded.push(DecodedCandidate {
                candidate,
                group: group_idx,
                slot,
                f,
            });
        }
    }
    decoded.sort_by(|a, b| b.f.partial_cmp(&a.f).expect("f-values are never NaN"));
    Ok(decoded)
}
