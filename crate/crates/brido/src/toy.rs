//! A minimal trainable conditional token model.
//!
//! The model is a conditional-bigram logits table indexed by (source bucket,
//! previous token, next token). It is deliberately tiny: every probability
//! is a closed-form softmax of raw logits, so the full multi-task objective
//! — cross-entropy on the reference plus the rank-margin contrastive loss
//! over generated candidates — has an exact, brute-force-checkable gradient.
//!
//! Token ids 0 and 1 are BOS and EOS by convention; everything after them is
//! content vocabulary.

use serde::{Deserialize, Serialize};

use crate::beam::{diverse_beam_search, BeamConfig, NextTokenModel};
use crate::loss::{
    combined_loss, ctr_loss, ctr_loss_grad, f_value_of_logprobs, f_value_token_grad, LossBreakdown,
    LossConfig, MarginSpec,
};
use crate::pool::CandidatePool;
use crate::rng::Xoshiro256PlusPlus;
use crate::scoring::{consensus_score, rank, ScoringConfig};
use crate::text::TokenSequence;
use crate::{real, real_of_usize, Error, Real, Result};

pub const BOS: usize = 0;
pub const EOS: usize = 1;

/// Current on-disk model format version.
pub const MODEL_FILE_VERSION: u32 = 1;

/// Serialized form of a [`ToyModel`]. Loading reproduces outputs bitwise as
/// long as the serializer round-trips the scalar exactly (JSON via this
/// workspace's pipeline does).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelFile<T> {
    pub version: u32,
    pub vocab: Vec<String>,
    pub num_buckets: usize,
    pub logits: Vec<T>,
}

/// Conditional-bigram logits table with a vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel<T> {
    vocab: Vec<String>,
    num_buckets: usize,
    /// Row-major [bucket][prev][next]. Unconstrained; softmax is applied at
    /// read time.
    logits: Vec<T>,
}

fn validate_vocab(vocab: &[String]) -> Result<()> {
    if vocab.len() < 3 {
        return Err(Error::VocabularyTooSmall(vocab.len()));
    }
    for token in &vocab[2..] {
        let canonical = !token.is_empty()
            && token.chars().all(|c| c.is_alphanumeric())
            && *token == token.to_lowercase();
        if !canonical {
            return Err(Error::InvalidContentToken(token.clone()));
        }
    }
    for (i, a) in vocab.iter().enumerate() {
        if vocab[..i].contains(a) {
            return Err(Error::InvalidContentToken(format!("duplicate {a:?}")));
        }
    }
    Ok(())
}

fn fnv1a_tokens(tokens: &[String]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET;
    for token in tokens {
        for byte in token.as_bytes() {
            hash ^= u64::from(*byte);
            hash = hash.wrapping_mul(PRIME);
        }
        // Separator byte keeps ["ab","c"] distinct from ["a","bc"].
        hash ^= 0x1f;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

impl<T: Real> ToyModel<T> {
    /// Seeded initialization with logits uniform in [−0.1, 0.1].
    ///
    /// The vocabulary must put BOS at index 0 and EOS at index 1, followed
    /// by at least one content token.
    pub fn init(vocab: Vec<String>, num_buckets: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeroed(vocab, num_buckets)?;
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
        for logit in &mut model.logits {
            *logit = real(rng.uniform(-0.1, 0.1));
        }
        Ok(model)
    }

    /// All-zero logits: every next-token distribution is uniform.
    pub fn zeroed(vocab: Vec<String>, num_buckets: usize) -> Result<Self> {
        validate_vocab(&vocab)?;
        if num_buckets == 0 {
            return Err(Error::InvalidConfig("num_buckets must be positive".into()));
        }
        let v = vocab.len();
        Ok(Self {
            vocab,
            num_buckets,
            logits: vec![T::zero(); num_buckets * v * v],
        })
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [T] {
        &mut self.logits
    }

    /// Deterministic source bucket: FNV-1a over the source tokens, modulo
    /// the bucket count.
    pub fn bucket(&self, source: &TokenSequence) -> usize {
        (fnv1a_tokens(source.tokens()) % self.num_buckets as u64) as usize
    }

    pub fn token_id(&self, token: &str) -> Result<usize> {
        self.vocab
            .iter()
            .position(|t| t == token)
            .ok_or_else(|| Error::UnknownToken(token.to_owned()))
    }

    fn row(&self, bucket: usize, prev: usize) -> &[T] {
        let v = self.vocab.len();
        let start = (bucket * v + prev) * v;
        &self.logits[start..start + v]
    }

    fn row_start(&self, bucket: usize, prev: usize) -> usize {
        let v = self.vocab.len();
        (bucket * v + prev) * v
    }

    /// Log-softmax of the logits row for (bucket, prev).
    pub fn log_softmax_row(&self, bucket: usize, prev: usize) -> Vec<T> {
        let row = self.row(bucket, prev);
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let sum_exp = row
            .iter()
            .fold(T::zero(), |acc, &logit| acc + (logit - max).exp());
        let lse = max + sum_exp.ln();
        row.iter().map(|&logit| logit - lse).collect()
    }

    fn softmax_row(&self, bucket: usize, prev: usize) -> Vec<T> {
        self.log_softmax_row(bucket, prev)
            .into_iter()
            .map(|lp| lp.exp())
            .collect()
    }

    /// Per-step log-probabilities of a token-id sequence (BOS implied in
    /// front; no EOS step).
    pub fn sequence_logprob_ids(&self, bucket: usize, ids: &[usize]) -> Vec<T> {
        let mut prev = BOS;
        let mut out = Vec::with_capacity(ids.len());
        for &id in ids {
            out.push(self.log_softmax_row(bucket, prev)[id]);
            prev = id;
        }
        out
    }

    /// Per-step log-probabilities of a token-string sequence under the
    /// source's bucket. Errors on out-of-vocabulary tokens.
    pub fn sequence_logprob(&self, source: &TokenSequence, tokens: &[String]) -> Result<Vec<T>> {
        let ids = self.token_ids(tokens)?;
        Ok(self.sequence_logprob_ids(self.bucket(source), &ids))
    }

    pub fn token_ids(&self, tokens: &[String]) -> Result<Vec<usize>> {
        tokens.iter().map(|t| self.token_id(t)).collect()
    }

    pub fn to_file(&self) -> ModelFile<T> {
        ModelFile {
            version: MODEL_FILE_VERSION,
            vocab: self.vocab.clone(),
            num_buckets: self.num_buckets,
            logits: self.logits.clone(),
        }
    }

    pub fn from_file(file: ModelFile<T>) -> Result<Self> {
        if file.version != MODEL_FILE_VERSION {
            return Err(Error::UnsupportedModelVersion(file.version));
        }
        validate_vocab(&file.vocab)?;
        let v = file.vocab.len();
        if file.num_buckets == 0 || file.logits.len() != file.num_buckets * v * v {
            return Err(Error::InvalidConfig(format!(
                "logits table has {} entries; expected {} ({} buckets over {v} tokens)",
                file.logits.len(),
                file.num_buckets * v * v,
                file.num_buckets,
            )));
        }
        Ok(Self {
            vocab: file.vocab,
            num_buckets: file.num_buckets,
            logits: file.logits,
        })
    }
}

impl<T: Real> NextTokenModel<T> for ToyModel<T> {
    fn vocab(&self) -> &[String] {
        &self.vocab
    }

    fn bos_id(&self) -> usize {
        BOS
    }

    fn eos_id(&self) -> usize {
        EOS
    }

    fn next_log_probs(&self, source: &TokenSequence, prefix: &[usize]) -> Vec<T> {
        let prev = prefix.last().copied().unwrap_or(BOS);
        self.log_softmax_row(self.bucket(source), prev)
    }
}

/// Everything one training step needs besides the data.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<T> {
    /// Plain gradient-descent step size. Zero is allowed: the step still
    /// reports losses but leaves the parameters untouched.
    pub learning_rate: T,
    pub epochs: usize,
    pub loss: LossConfig<T>,
    pub margin: MarginSpec<T>,
    pub scoring: ScoringConfig<T>,
    pub beam: BeamConfig<T>,
    pub seed: u64,
}

impl<T: Real> TrainConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate.is_nan()
            || self.learning_rate < T::zero()
            || self.learning_rate.is_infinite()
        {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be a non-negative finite real, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Candidates fixed for one objective evaluation, already in rank order.
#[derive(Debug, Clone)]
pub struct RankedCandidates<T> {
    /// Token ids per candidate, best-ranked first.
    pub token_ids: Vec<Vec<usize>>,
    /// Consensus scores aligned with `token_ids`.
    pub scores: Vec<T>,
}

/// Mean negative log-likelihood of the reference, including the EOS step.
fn xent_forward<T: Real>(model: &ToyModel<T>, bucket: usize, reference_ids: &[usize]) -> T {
    let mut prev = BOS;
    let mut nll = T::zero();
    for &target in reference_ids.iter().chain(std::iter::once(&EOS)) {
        nll -= model.log_softmax_row(bucket, prev)[target];
        prev = target;
    }
    nll / real_of_usize(reference_ids.len() + 1)
}

/// The combined objective on fixed ranked candidates.
///
/// Candidate log-probabilities are re-derived from the current parameters,
/// so this function is a differentiable map from the logits table to the
/// loss (away from hinge kinks), which is what finite-difference
/// verification probes.
pub fn objective<T: Real>(
    model: &ToyModel<T>,
    source: &TokenSequence,
    reference_ids: &[usize],
    ranked: &RankedCandidates<T>,
    loss_cfg: &LossConfig<T>,
    margin: &MarginSpec<T>,
) -> Result<LossBreakdown<T>> {
    let bucket = model.bucket(source);
    let xent = xent_forward(model, bucket, reference_ids);
    let f_values: Vec<T> = ranked
        .token_ids
        .iter()
        .map(|ids| f_value_of_logprobs(&model.sequence_logprob_ids(bucket, ids), loss_cfg.beta))
        .collect();
    let ctr = ctr_loss(&f_values, &ranked.scores, margin)?;
    Ok(combined_loss(xent, ctr, loss_cfg))
}

/// [`objective`] plus its exact gradient with respect to every logit.
///
/// The cross-entropy term contributes the usual softmax gradient; the
/// contrastive term chains ∂L/∂f through ∂f/∂logprob_t = 1/|S|^β and the
/// log-softmax Jacobian ∂logprob_t/∂logit = 1[w = y_t] − p_w.
pub fn objective_with_grad<T: Real>(
    model: &ToyModel<T>,
    source: &TokenSequence,
    reference_ids: &[usize],
    ranked: &RankedCandidates<T>,
    loss_cfg: &LossConfig<T>,
    margin: &MarginSpec<T>,
) -> Result<(LossBreakdown<T>, Vec<T>)> {
    let bucket = model.bucket(source);
    let mut grad = vec![T::zero(); model.logits.len()];

    // Cross-entropy term.
    let steps = real_of_usize::<T>(reference_ids.len() + 1);
    let mut prev = BOS;
    let mut nll = T::zero();
    for &target in reference_ids.iter().chain(std::iter::once(&EOS)) {
        nll -= model.log_softmax_row(bucket, prev)[target];
        let probs = model.softmax_row(bucket, prev);
        let start = model.row_start(bucket, prev);
        for (w, &p) in probs.iter().enumerate() {
            let indicator = if w == target { T::one() } else { T::zero() };
            grad[start + w] += (p - indicator) / steps;
        }
        prev = target;
    }
    let xent = nll / steps;

    // Contrastive term.
    let f_values: Vec<T> = ranked
        .token_ids
        .iter()
        .map(|ids| f_value_of_logprobs(&model.sequence_logprob_ids(bucket, ids), loss_cfg.beta))
        .collect();
    let ctr = ctr_loss(&f_values, &ranked.scores, margin)?;
    if loss_cfg.gamma > T::zero() {
        let f_grad = ctr_loss_grad(&f_values, &ranked.scores, margin)?;
        for (ids, &g) in ranked.token_ids.iter().zip(&f_grad) {
            if g == T::zero() {
                continue;
            }
            let chain = loss_cfg.gamma * g * f_value_token_grad(ids.len(), loss_cfg.beta);
            let mut prev = BOS;
            for &token in ids {
                let probs = model.softmax_row(bucket, prev);
                let start = model.row_start(bucket, prev);
                for (w, &p) in probs.iter().enumerate() {
                    let indicator = if w == token { T::one() } else { T::zero() };
                    grad[start + w] += chain * (indicator - p);
                }
                prev = token;
            }
        }
    }

    Ok((combined_loss(xent, ctr, loss_cfg), grad))
}

/// Generates candidates, ranks them by consensus, and packages them for the
/// objective.
pub fn generate_ranked_candidates<T: Real>(
    model: &ToyModel<T>,
    source: &TokenSequence,
    reference: &TokenSequence,
    scoring: &ScoringConfig<T>,
    beam: &BeamConfig<T>,
) -> Result<RankedCandidates<T>> {
    let decoded = diverse_beam_search(model, source, beam)?;
    let pool = CandidatePool::new(
        source.clone(),
        Some(reference.clone()),
        decoded.iter().map(|d| d.candidate.clone()).collect(),
    );
    let scores = consensus_score(&pool, scoring)?;
    let ranking = rank(&scores);
    let token_ids = ranking
        .order
        .iter()
        .map(|&i| model.token_ids(pool.candidates[i].seq().tokens()))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankedCandidates {
        token_ids,
        scores: ranking.ranked_scores(),
    })
}

/// One gradient-descent step of the multi-task objective. Returns the
/// pre-update loss.
pub fn train_step<T: Real>(
    model: &mut ToyModel<T>,
    source: &TokenSequence,
    reference: &TokenSequence,
    cfg: &TrainConfig<T>,
) -> Result<LossBreakdown<T>> {
    cfg.validate()?;
    let reference_ids = model.token_ids(reference.tokens())?;
    let ranked = generate_ranked_candidates(model, source, reference, &cfg.scoring, &cfg.beam)?;
    let (breakdown, grad) = objective_with_grad(
        model,
        source,
        &reference_ids,
        &ranked,
        &cfg.loss,
        &cfg.margin,
    )?;
    for (logit, g) in model.logits.iter_mut().zip(&grad) {
        *logit -= cfg.learning_rate * *g;
    }
    Ok(breakdown)
}

/// Sequential training over the corpus: `epochs` passes in corpus order.
/// Returns one loss per step.
pub fn train<T: Real>(
    model: &mut ToyModel<T>,
    corpus: &[(TokenSequence, TokenSequence)],
    cfg: &TrainConfig<T>,
) -> Result<Vec<LossBreakdown<T>>> {
    let mut trace = Vec::with_capacity(cfg.epochs * corpus.len());
    for _ in 0..cfg.epochs {
        for (source, reference) in corpus {
            trace.push(train_step(model, source, reference, cfg)?);
        }
    }
    Ok(trace)
}
