//! Scoring every candidate in a store against its exhibit's gold record.

use chrono::{DateTime, FixedOffset};
use serde::Serialize;
use thiserror::Error;

use crate::matching::{gold_relevant, tally_records, MatchError};
use crate::metrics::{score_case, CaseMetrics, MetricsError};
use crate::model::{Decision, RecordKey};
use crate::store::{CaseStore, StoreError};

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("no gold record for: {}", list(.0))]
    NotReady(Vec<(String, String)>),
    #[error("{key}: {source}")]
    Match { key: RecordKey, source: MatchError },
    #[error("{key}: {source}")]
    Metrics { key: RecordKey, source: MetricsError },
    #[error("{key}: timestamp does not parse")]
    Timestamp { key: RecordKey },
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn list(v: &[(String, String)]) -> String {
    v.iter()
        .map(|(c, e)| format!("{c}/{e}"))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Restricts which records are scored. `None` fields match everything.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseFilter {
    pub case_id: Option<String>,
    pub exhibit_id: Option<String>,
    pub process_id: Option<String>,
    pub gold_process_id: Option<String>,
}

impl CaseFilter {
    pub fn case(case_id: impl Into<String>) -> Self {
        Self {
            case_id: Some(case_id.into()),
            ..Self::default()
        }
    }

    fn exhibit_matches(&self, case_id: &str, exhibit_id: &str) -> bool {
        self.case_id.as_deref().is_none_or(|c| c == case_id)
            && self.exhibit_id.as_deref().is_none_or(|e| e == exhibit_id)
    }
}

/// One candidate record scored against its gold record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredCase {
    pub case_id: String,
    pub exhibit_id: String,
    pub examiner_id: String,
    pub process_id: String,
    pub timestamp: DateTime<FixedOffset>,
    /// Echo of the record's timestamp text.
    pub timestamp_text: String,
    pub candidate_decision: Option<Decision>,
    /// Implied by the gold relevant count.
    pub gold_decision: Decision,
    pub metrics: CaseMetrics,
    pub polarity_mismatches: usize,
}

/// Scores every candidate whose exhibit matches `filter`.
///
/// Exhibits are visited in `(case_id, exhibit_id)` order and candidates in
/// store pairing order. Exhibits without a gold record fail the whole call
/// and are listed in the error.
pub fn score_store(store: &CaseStore, filter: &CaseFilter) -> Result<Vec<ScoredCase>, ScoreError> {
    let exhibits: Vec<(String, String)> = store
        .exhibits()
        .into_iter()
        .filter(|(c, e)| filter.exhibit_matches(c, e))
        .collect();

    let missing: Vec<(String, String)> = exhibits
        .iter()
        .filter(|(c, e)| store.gold(c, e).is_none())
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ScoreError::NotReady(missing));
    }

    let mut out = Vec::new();
    for (case_id, exhibit_id) in &exhibits {
        let (gold, candidates) = store.pair_records(case_id, exhibit_id)?;
        if filter
            .gold_process_id
            .as_deref()
            .is_some_and(|p| p != gold.process_id)
        {
            continue;
        }
        let relevant = gold_relevant(gold).map_err(|source| ScoreError::Match {
            key: gold.key(),
            source,
        })?;
        for cand in candidates {
            if filter
                .process_id
                .as_deref()
                .is_some_and(|p| p != cand.process_id)
            {
                continue;
            }
            let key = cand.key();
            let (tally, matched) = tally_records(gold, cand).map_err(|source| ScoreError::Match {
                key: key.clone(),
                source,
            })?;
            let metrics = score_case(relevant, tally).map_err(|source| ScoreError::Metrics {
                key: key.clone(),
                source,
            })?;
            let timestamp = cand
                .parsed_timestamp()
                .ok_or(ScoreError::Timestamp { key: key.clone() })?;
            out.push(ScoredCase {
                case_id: cand.case_id.clone(),
                exhibit_id: cand.exhibit_id.clone(),
                examiner_id: cand.examiner_id.clone(),
                process_id: cand.process_id.clone(),
                timestamp,
                timestamp_text: cand.timestamp.clone(),
                candidate_decision: cand.decision,
                gold_decision: Decision::from_relevant_count(relevant),
                metrics,
                polarity_mismatches: matched.polarity_mismatches.len(),
            });
        }
    }
    Ok(out)
}
