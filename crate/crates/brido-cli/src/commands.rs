//! Command implementations. Each processes every record, isolates
//! per-record failures as error entries in the output stream, and reports
//! how the process should exit.

use std::collections::BTreeMap;
use std::io::Write;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::Value;

use brido::loss::{combined_loss, ctr_loss, f_value, grad_check};
use brido::scoring::{consensus_score, rank};
use brido::sim::evaluate_conjecture;
use brido::text::TokenSequence;
use brido::toy::train;
use brido::{beam, CandidatePool, SimConfig, ToyModel, TrainConfig};

use crate::config::RunConfig;
use crate::formats::{
    BeamCandidateOut, BeamOut, ErrorOut, GradCheckOut, IngestedLine, LossOut, PoolRecord, RankOut,
    ScoreOut, TrainStepOut,
};

/// What happened across all records of one command.
#[derive(Debug, Default, Clone, Copy)]
pub struct Outcome {
    pub records: usize,
    /// Records rejected for input reasons (parse failures, invariant
    /// violations, missing data).
    pub record_errors: usize,
    /// Records that processed fine but failed a numeric threshold.
    pub threshold_failures: usize,
}

impl Outcome {
    fn ok_record(&mut self) {
        self.records += 1;
    }

    fn failed_record(&mut self) {
        self.records += 1;
        self.record_errors += 1;
    }
}

fn emit(out: &mut dyn Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn emit_error(out: &mut dyn Write, record: usize, error: String) -> Result<()> {
    emit(out, &ErrorOut { record, error })
}

/// Runs one handler per ingested record. Handler failures become error
/// entries and processing continues; output write failures abort.
fn for_each_pool<V: Serialize>(
    pools: &[IngestedLine<CandidatePool>],
    out: &mut dyn Write,
    mut handle: impl FnMut(usize, &CandidatePool) -> brido::Result<V>,
) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    for (record, (_, pool)) in pools.iter().enumerate() {
        let result = pool
            .as_ref()
            .map_err(Clone::clone)
            .and_then(|pool| handle(record, pool).map_err(|e| e.to_string()));
        match result {
            Ok(value) => {
                outcome.ok_record();
                emit(out, &value)?;
            }
            Err(error) => {
                outcome.failed_record();
                emit_error(out, record, error)?;
            }
        }
    }
    Ok(outcome)
}

pub fn cmd_score(
    pools: &[IngestedLine<CandidatePool>],
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let scoring = cfg.scoring()?;
    for_each_pool(pools, out, |record, pool| {
        Ok(ScoreOut {
            record,
            scores: consensus_score(pool, &scoring)?,
        })
    })
}

pub fn cmd_rank(
    pools: &[IngestedLine<CandidatePool>],
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let scoring = cfg.scoring()?;
    for_each_pool(pools, out, |record, pool| {
        let ranking = rank(&consensus_score(pool, &scoring)?);
        Ok(RankOut {
            record,
            scores: ranking.scores,
            order: ranking.order,
        })
    })
}

/// Rank-ordered f-values and scores for one pool; shared by loss and
/// gradcheck.
fn ranked_f_values(
    pool: &CandidatePool,
    cfg: &RunConfig,
) -> brido::Result<(Vec<usize>, Vec<f64>, Vec<f64>)> {
    let scores = consensus_score(pool, &cfg.scoring()?)?;
    let ranking = rank(&scores);
    let beta = cfg.loss()?.beta;
    let f_ranked = ranking
        .order
        .iter()
        .map(|&i| f_value(&pool.candidates[i], beta))
        .collect::<brido::Result<Vec<_>>>()?;
    let ranked_scores = ranking.ranked_scores();
    Ok((ranking.order, f_ranked, ranked_scores))
}

pub fn cmd_loss(
    pools: &[IngestedLine<CandidatePool>],
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let margin = cfg.margin_spec()?;
    let loss_cfg = cfg.loss()?;
    for_each_pool(pools, out, |record, pool| {
        let (order, f_ranked, ranked_scores) = ranked_f_values(pool, cfg)?;
        let ctr = ctr_loss(&f_ranked, &ranked_scores, &margin)?;
        // No model in the data path, so the cross-entropy term is 0 and the
        // total is γ·ctr.
        let breakdown = combined_loss(0.0, ctr, &loss_cfg);
        Ok(LossOut {
            record,
            order,
            f_values: f_ranked,
            xent: breakdown.xent,
            ctr: breakdown.ctr,
            total: breakdown.total,
        })
    })
}

pub fn cmd_gradcheck(
    pools: &[IngestedLine<CandidatePool>],
    cfg: &RunConfig,
    epsilon: f64,
    tolerance: f64,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let margin = cfg.margin_spec()?;
    let mut failures = 0usize;
    let mut outcome = for_each_pool(pools, out, |record, pool| {
        let (_, f_ranked, ranked_scores) = ranked_f_values(pool, cfg)?;
        let max_rel_error = grad_check(&f_ranked, &ranked_scores, &margin, epsilon)?;
        let pass = max_rel_error <= tolerance;
        if !pass {
            failures += 1;
        }
        Ok(GradCheckOut {
            record,
            max_rel_error,
            pass,
        })
    })?;
    outcome.threshold_failures = failures;
    Ok(outcome)
}

pub fn cmd_beam(
    model: &ToyModel,
    records: &[IngestedLine<PoolRecord>],
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let beam_cfg = cfg.beam()?;
    let mut outcome = Outcome::default();
    for (record, (_, parsed)) in records.iter().enumerate() {
        let handled = parsed.as_ref().map_err(Clone::clone).and_then(|rec| {
            let source = TokenSequence::new(rec.source.as_str());
            beam::diverse_beam_search(model, &source, &beam_cfg).map_err(|e| e.to_string())
        });
        match handled {
            Ok(decoded) => {
                outcome.ok_record();
                let candidates = decoded
                    .iter()
                    .map(|d| BeamCandidateOut {
                        text: d.candidate.seq().text().to_owned(),
                        token_logprobs: d.candidate.token_logprobs().unwrap_or(&[]).to_vec(),
                        group: d.group,
                        slot: d.slot,
                        f: d.f,
                    })
                    .collect();
                emit(out, &BeamOut { record, candidates })?;
            }
            Err(error) => {
                outcome.failed_record();
                emit_error(out, record, error)?;
            }
        }
    }
    Ok(outcome)
}

/// Builds the deterministic training vocabulary: BOS, EOS, then every
/// distinct corpus token in sorted order.
pub fn corpus_vocab(corpus: &[(TokenSequence, TokenSequence)]) -> Vec<String> {
    let mut tokens: Vec<String> = corpus
        .iter()
        .flat_map(|(s, r)| s.tokens().iter().chain(r.tokens().iter()).cloned())
        .collect();
    tokens.sort();
    tokens.dedup();
    let mut vocab = vec!["<bos>".to_owned(), "<eos>".to_owned()];
    vocab.extend(tokens);
    vocab
}

pub struct TrainArgs {
    pub learning_rate: f64,
    pub epochs: usize,
    pub num_buckets: usize,
}

/// Trains a fresh model on the corpus and emits the per-step loss trace.
/// Returns the trained model for the caller to persist. A broken corpus
/// record aborts training; unlike evaluation, a partial corpus would
/// silently change what the model learns.
pub fn cmd_train(
    records: &[IngestedLine<PoolRecord>],
    cfg: &RunConfig,
    args: &TrainArgs,
    trace_out: &mut dyn Write,
) -> Result<(ToyModel, Outcome)> {
    let mut corpus = Vec::with_capacity(records.len());
    for (lineno, rec) in records {
        let rec = match rec {
            Ok(rec) => rec,
            Err(e) => bail!("corpus {e}"),
        };
        let reference = rec
            .reference
            .as_deref()
            .with_context(|| format!("corpus line {lineno}: training needs a reference"))?;
        corpus.push((
            TokenSequence::new(rec.source.as_str()),
            TokenSequence::new(reference),
        ));
    }
    if corpus.is_empty() {
        bail!("corpus is empty");
    }

    let vocab = corpus_vocab(&corpus);
    let mut model = ToyModel::init(vocab, args.num_buckets, cfg.seed)?;
    let train_cfg = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        loss: cfg.loss()?,
        margin: cfg.margin_spec()?,
        scoring: cfg.scoring()?,
        beam: cfg.beam()?,
        seed: cfg.seed,
    };
    let trace = train(&mut model, &corpus, &train_cfg)?;
    for (step, loss) in trace.iter().enumerate() {
        let epoch = step / corpus.len();
        let example = step % corpus.len();
        emit(trace_out, &TrainStepOut::new(step, epoch, example, loss))?;
    }
    let outcome = Outcome {
        records: corpus.len(),
        ..Outcome::default()
    };
    Ok((model, outcome))
}

pub fn cmd_simulate(sim_cfg: &SimConfig, out: &mut dyn Write) -> Result<Outcome> {
    let report = evaluate_conjecture(sim_cfg)?;
    emit(out, &report)?;
    Ok(Outcome {
        records: 1,
        ..Outcome::default()
    })
}

#[derive(Default)]
struct FieldStats {
    count: usize,
    sum: f64,
    min: f64,
    max: f64,
}

impl FieldStats {
    fn push(&mut self, v: f64) {
        if self.count == 0 {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.count += 1;
        self.sum += v;
    }
}

/// Summarizes any report file: record counts plus min/mean/max of every
/// top-level numeric field. Optionally re-emits the parsed records in
/// canonical form (same field order, full float precision).
pub fn cmd_report(
    lines: &[IngestedLine<Value>],
    mut reemit: Option<&mut dyn Write>,
    out: &mut dyn Write,
) -> Result<Outcome> {
    let mut outcome = Outcome::default();
    let mut stats: BTreeMap<String, FieldStats> = BTreeMap::new();
    let mut error_entries = 0usize;

    for (_, parsed) in lines {
        match parsed {
            Ok(value) => {
                outcome.ok_record();
                if let Some(w) = reemit.as_deref_mut() {
                    emit(w, value)?;
                }
                if let Value::Object(map) = value {
                    if map.contains_key("error") {
                        error_entries += 1;
                    }
                    for (key, field) in map {
                        if let Some(num) = field.as_f64() {
                            stats.entry(key.clone()).or_default().push(num);
                        }
                    }
                }
            }
            Err(e) => {
                outcome.failed_record();
                writeln!(out, "unparseable: {e}")?;
            }
        }
    }

    writeln!(
        out,
        "records: {} (unparseable: {}, error entries: {})",
        outcome.records, outcome.record_errors, error_entries
    )?;
    for (key, s) in &stats {
        writeln!(
            out,
            "{key}: count={} mean={} min={} max={}",
            s.count,
            s.sum / s.count as f64,
            s.min,
            s.max
        )?;
    }
    Ok(outcome)
}
