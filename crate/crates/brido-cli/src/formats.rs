//! Wire formats: JSON-lines records for pools, corpora, and reports.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use brido::text::TokenSequence;
use brido::{Candidate, CandidatePool, LossBreakdown, SimReport};

/// One candidate of a pool record.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateRecord {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
}

/// One line of a pools (or corpus) file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolRecord {
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub candidates: Vec<CandidateRecord>,
}

impl PoolRecord {
    /// Tokenizes the record into a pool, validating log-probability lists
    /// against the tokenized candidate lengths.
    pub fn to_pool(&self) -> brido::Result<CandidatePool> {
        let candidates = self
            .candidates
            .iter()
            .enumerate()
            .map(|(idx, c)| {
                let seq = TokenSequence::new(c.text.as_str());
                match &c.token_logprobs {
                    Some(lps) => Candidate::with_logprobs_at(idx, seq, lps.clone()),
                    None => Ok(Candidate::new(seq)),
                }
            })
            .collect::<brido::Result<Vec<_>>>()?;
        Ok(CandidatePool::new(
            TokenSequence::new(self.source.as_str()),
            self.reference.as_deref().map(TokenSequence::new),
            candidates,
        ))
    }
}

/// A parsed input line: the 1-based line number it came from, and either a
/// record or the reason it was rejected.
pub type IngestedLine<T> = (usize, Result<T, String>);

/// Reads JSON-lines records, skipping blank lines. Malformed lines become
/// per-record errors naming their line number; processing continues.
pub fn ingest_records<T: serde::de::DeserializeOwned>(
    reader: impl BufRead,
) -> std::io::Result<Vec<IngestedLine<T>>> {
    let mut out = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = lineno + 1;
        let parsed = serde_json::from_str::<T>(&line).map_err(|e| format!("line {lineno}: {e}"));
        out.push((lineno, parsed));
    }
    Ok(out)
}

/// Pools plus validation: a record that parses but fails pool invariants
/// (bad log-probability lists) is also a per-record error.
pub fn ingest_pools(reader: impl BufRead) -> std::io::Result<Vec<IngestedLine<CandidatePool>>> {
    let records = ingest_records::<PoolRecord>(reader)?;
    Ok(records
        .into_iter()
        .map(|(lineno, rec)| {
            let pool = rec.and_then(|r| r.to_pool().map_err(|e| format!("line {lineno}: {e}")));
            (lineno, pool)
        })
        .collect())
}

// Output records. Field order is fixed by struct order; numbers are emitted
// with full round-trip precision.

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorOut {
    pub record: usize,
    pub error: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ScoreOut {
    pub record: usize,
    pub scores: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RankOut {
    pub record: usize,
    pub scores: Vec<f64>,
    /// Candidate indices (0-based), best first.
    pub order: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LossOut {
    pub record: usize,
    pub order: Vec<usize>,
    /// f-values in rank order, aligned with `order`.
    pub f_values: Vec<f64>,
    pub xent: f64,
    pub ctr: f64,
    pub total: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GradCheckOut {
    pub record: usize,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BeamCandidateOut {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    pub group: usize,
    pub slot: usize,
    pub f: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BeamOut {
    pub record: usize,
    pub candidates: Vec<BeamCandidateOut>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainStepOut {
    pub step: usize,
    pub epoch: usize,
    pub example: usize,
    pub xent: f64,
    pub ctr: f64,
    pub total: f64,
}

impl TrainStepOut {
    pub fn new(step: usize, epoch: usize, example: usize, loss: &LossBreakdown) -> Self {
        Self {
            step,
            epoch,
            example,
            xent: loss.xent,
            ctr: loss.ctr,
            total: loss.total,
        }
    }
}

/// The simulate command emits the report as-is, one JSON object.
pub type SimReportOut = SimReport;
