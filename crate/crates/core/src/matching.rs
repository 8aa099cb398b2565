//! Turning gold and candidate records into confusion tallies.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{Artifact, ConfusionTally, DeclaredTally, ExaminationRecord, RecordMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Gold,
    Candidate,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchError {
    #[error("duplicate artifact id {id:?} in {side:?} list")]
    DuplicateId { side: Side, id: String },
    #[error("declared tally is inconsistent: {0}")]
    MalformedTally(String),
    #[error("candidate claims {claimed} relevant items but the gold standard holds only {gold_relevant}")]
    Inconsistent { claimed: u64, gold_relevant: u64 },
    #[error("cannot compare {gold} gold record with {candidate} candidate record")]
    ModeUnsupported {
        gold: RecordMode,
        candidate: RecordMode,
    },
    #[error("record is missing its {0}")]
    MissingPayload(&'static str),
}

/// Outcome of matching two itemized artifact lists by id.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MatchResult {
    pub tp_ids: BTreeSet<String>,
    pub fp_ids: BTreeSet<String>,
    pub fn_ids: BTreeSet<String>,
    /// Matched ids whose category differs between gold and candidate.
    /// They still count as true positives.
    pub polarity_mismatches: BTreeSet<String>,
}

fn index(list: &[Artifact], side: Side) -> Result<BTreeMap<&str, &Artifact>, MatchError> {
    let mut map = BTreeMap::new();
    for a in list {
        if map.insert(a.id.as_str(), a).is_some() {
            return Err(MatchError::DuplicateId {
                side,
                id: a.id.clone(),
            });
        }
    }
    Ok(map)
}

/// Exact-id set comparison. Category does not affect membership.
pub fn match_artifacts(gold: &[Artifact], candidate: &[Artifact]) -> Result<MatchResult, MatchError> {
    let gold = index(gold, Side::Gold)?;
    let cand = index(candidate, Side::Candidate)?;

    let mut out = MatchResult::default();
    for (id, g) in &gold {
        match cand.get(id) {
            Some(c) => {
                out.tp_ids.insert(id.to_string());
                if c.category != g.category {
                    out.polarity_mismatches.insert(id.to_string());
                }
            }
            None => {
                out.fn_ids.insert(id.to_string());
            }
        }
    }
    out.fp_ids = cand
        .keys()
        .filter(|id| !gold.contains_key(*id))
        .map(|id| id.to_string())
        .collect();
    Ok(out)
}

pub fn tally_from_match(m: &MatchResult) -> ConfusionTally {
    ConfusionTally::new(
        m.tp_ids.len() as u64,
        m.fp_ids.len() as u64,
        m.fn_ids.len() as u64,
    )
}

/// Completes a count-only candidate against the gold relevant count.
pub fn reconcile_tally(declared: &DeclaredTally, gold_relevant: u64) -> Result<ConfusionTally, MatchError> {
    let tp = declared.true_positives().ok_or_else(|| {
        MatchError::MalformedTally(format!(
            "false_positives ({}) exceeds retrieved ({})",
            declared.false_positives, declared.retrieved
        ))
    })?;
    if let Some(rr) = declared.relevant_retrieved {
        if rr != tp {
            return Err(MatchError::MalformedTally(format!(
                "relevant_retrieved ({rr}) != retrieved - false_positives ({tp})"
            )));
        }
    }
    let fn_ = gold_relevant
        .checked_sub(tp)
        .ok_or(MatchError::Inconsistent {
            claimed: tp,
            gold_relevant,
        })?;
    Ok(ConfusionTally::new(tp, declared.false_positives, fn_))
}

/// Relevant count of a gold record in either mode.
pub fn gold_relevant(gold: &ExaminationRecord) -> Result<u64, MatchError> {
    match gold.mode {
        RecordMode::Itemized => gold
            .artifacts
            .as_ref()
            .map(|a| a.len() as u64)
            .ok_or(MatchError::MissingPayload("artifacts")),
        RecordMode::Tally => {
            let t = gold
                .declared_tally
                .ok_or(MatchError::MissingPayload("declared_tally"))?;
            t.true_positives().ok_or_else(|| {
                MatchError::MalformedTally("gold false_positives exceeds retrieved".into())
            })
        }
    }
}

/// Tally for a candidate record scored against a gold record.
///
/// Itemized candidates need an itemized gold record; tally candidates only
/// need the gold relevant count.
pub fn tally_records(
    gold: &ExaminationRecord,
    candidate: &ExaminationRecord,
) -> Result<(ConfusionTally, MatchResult), MatchError> {
    match (gold.mode, candidate.mode) {
        (RecordMode::Itemized, RecordMode::Itemized) => {
            let g = gold
                .artifacts
                .as_deref()
                .ok_or(MatchError::MissingPayload("artifacts"))?;
            let c = candidate
                .artifacts
                .as_deref()
                .ok_or(MatchError::MissingPayload("artifacts"))?;
            let m = match_artifacts(g, c)?;
            Ok((tally_from_match(&m), m))
        }
        (_, RecordMode::Tally) => {
            let declared = candidate
                .declared_tally
                .ok_or(MatchError::MissingPayload("declared_tally"))?;
            let tally = reconcile_tally(&declared, gold_relevant(gold)?)?;
            Ok((tally, MatchResult::default()))
        }
        (g, c) => Err(MatchError::ModeUnsupported {
            gold: g,
            candidate: c,
        }),
    }
}
