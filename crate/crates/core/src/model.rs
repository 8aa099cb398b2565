//! Shared domain vocabulary: artifacts, examination records, confusion
//! tallies and metric values with an explicit undefined state.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Schema tag carried by every examination manifest.
pub const RECORD_SCHEMA: &str = "fah/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Inculpatory,
    Exculpatory,
}

impl Category {
    pub fn flipped(self) -> Self {
        match self {
            Category::Inculpatory => Category::Exculpatory,
            Category::Exculpatory => Category::Inculpatory,
        }
    }
}

/// A single piece of information judged relevant by an examiner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Artifact {
    pub id: String,
    pub category: Category,
    #[serde(default)]
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Artifact {
    pub fn new(id: impl Into<String>, category: Category) -> Self {
        Self {
            id: id.into(),
            category,
            source: String::new(),
            note: None,
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Gold,
    Candidate,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Gold => "gold",
            Role::Candidate => "candidate",
        })
    }
}

/// Exhibit-level call on whether a full examination is warranted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    FurtherAnalysisYes,
    FurtherAnalysisNo,
}

impl Decision {
    /// The decision implied by a gold-standard relevant count.
    pub fn from_relevant_count(relevant: u64) -> Self {
        if relevant > 0 {
            Decision::FurtherAnalysisYes
        } else {
            Decision::FurtherAnalysisNo
        }
    }

    pub fn is_yes(self) -> bool {
        self == Decision::FurtherAnalysisYes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    Itemized,
    Tally,
}

impl fmt::Display for RecordMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecordMode::Itemized => "itemized",
            RecordMode::Tally => "tally",
        })
    }
}

/// Counts reported by an examination that never itemized its artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredTally {
    pub retrieved: u64,
    pub false_positives: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_retrieved: Option<u64>,
}

impl DeclaredTally {
    pub fn new(retrieved: u64, false_positives: u64) -> Self {
        Self {
            retrieved,
            false_positives,
            relevant_retrieved: None,
        }
    }

    fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.false_positives > self.retrieved {
            out.push(Violation::FalsePositivesExceedRetrieved {
                retrieved: self.retrieved,
                false_positives: self.false_positives,
            });
        } else if let Some(rr) = self.relevant_retrieved {
            let expected = self.retrieved - self.false_positives;
            if rr != expected {
                out.push(Violation::RelevantRetrievedMismatch {
                    declared: rr,
                    expected,
                });
            }
        }
        out
    }

    /// Relevant items among those retrieved, when the tally is consistent.
    pub fn true_positives(&self) -> Option<u64> {
        self.retrieved.checked_sub(self.false_positives)
    }
}

/// One examiner's (or tool's) output for one exhibit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExaminationRecord {
    pub schema: String,
    pub case_id: String,
    pub exhibit_id: String,
    pub examiner_id: String,
    pub process_id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decision: Option<Decision>,
    /// RFC 3339 instant with an explicit offset.
    pub timestamp: String,
    pub mode: RecordMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifacts: Option<Vec<Artifact>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_tally: Option<DeclaredTally>,
    /// What one counted "piece of information" means for this record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub granularity: Option<String>,
    #[serde(default)]
    pub notes: String,
}

/// Identity of a record inside a store.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RecordKey {
    pub case_id: String,
    pub exhibit_id: String,
    pub examiner_id: String,
    pub process_id: String,
    pub role: Role,
}

impl fmt::Display for RecordKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}/{}/{}/{}",
            self.case_id, self.exhibit_id, self.examiner_id, self.process_id, self.role
        )
    }
}

impl ExaminationRecord {
    pub fn key(&self) -> RecordKey {
        RecordKey {
            case_id: self.case_id.clone(),
            exhibit_id: self.exhibit_id.clone(),
            examiner_id: self.examiner_id.clone(),
            process_id: self.process_id.clone(),
            role: self.role,
        }
    }

    pub fn parsed_timestamp(&self) -> Option<DateTime<FixedOffset>> {
        parse_timestamp(&self.timestamp)
    }

    /// Number of artifacts this record claims as relevant. For a gold
    /// record this is the gold-standard relevant count.
    pub fn claimed_count(&self) -> Option<u64> {
        match self.mode {
            RecordMode::Itemized => self.artifacts.as_ref().map(|a| a.len() as u64),
            RecordMode::Tally => self.declared_tally.and_then(|t| t.true_positives()),
        }
    }

    /// Items the record put forward, relevant or not.
    pub fn retrieved_count(&self) -> Option<u64> {
        match self.mode {
            RecordMode::Itemized => self.artifacts.as_ref().map(|a| a.len() as u64),
            RecordMode::Tally => self.declared_tally.map(|t| t.retrieved),
        }
    }
}

/// Accepts RFC 3339 only; a bare local time has no offset and is refused.
pub fn parse_timestamp(s: &str) -> Option<DateTime<FixedOffset>> {
    DateTime::parse_from_rfc3339(s).ok()
}

/// A broken record invariant. Violations are data, not failures.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    UnsupportedSchema { found: String },
    EmptyField { field: String },
    EmptyArtifactId,
    DuplicateArtifactId { id: String },
    ModeMismatch { mode: RecordMode, detail: String },
    FalsePositivesExceedRetrieved { retrieved: u64, false_positives: u64 },
    RelevantRetrievedMismatch { declared: u64, expected: u64 },
    InvalidTimestamp { value: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnsupportedSchema { found } => {
                write!(f, "unsupported schema {found:?}, expected {RECORD_SCHEMA:?}")
            }
            Violation::EmptyField { field } => write!(f, "field `{field}` is empty"),
            Violation::EmptyArtifactId => f.write_str("artifact with empty id"),
            Violation::DuplicateArtifactId { id } => write!(f, "duplicate artifact id {id:?}"),
            Violation::ModeMismatch { mode, detail } => write!(f, "mode {mode}: {detail}"),
            Violation::FalsePositivesExceedRetrieved {
                retrieved,
                false_positives,
            } => write!(
                f,
                "false_positives ({false_positives}) exceeds retrieved ({retrieved})"
            ),
            Violation::RelevantRetrievedMismatch { declared, expected } => write!(
                f,
                "relevant_retrieved is {declared} but retrieved - false_positives is {expected}"
            ),
            Violation::InvalidTimestamp { value } => {
                write!(f, "timestamp {value:?} is not an RFC 3339 instant with offset")
            }
        }
    }
}

/// Lists every invariant the record breaks, sorted and deduplicated so the
/// result does not depend on artifact order.
pub fn validate_record(record: &ExaminationRecord) -> Vec<Violation> {
    let mut out = BTreeSet::new();

    if record.schema != RECORD_SCHEMA {
        out.insert(Violation::UnsupportedSchema {
            found: record.schema.clone(),
        });
    }
    for (field, value) in [
        ("case_id", &record.case_id),
        ("exhibit_id", &record.exhibit_id),
        ("examiner_id", &record.examiner_id),
        ("process_id", &record.process_id),
    ] {
        if value.trim().is_empty() {
            out.insert(Violation::EmptyField {
                field: field.to_string(),
            });
        }
    }
    if record.parsed_timestamp().is_none() {
        out.insert(Violation::InvalidTimestamp {
            value: record.timestamp.clone(),
        });
    }

    match record.mode {
        RecordMode::Itemized => {
            if record.artifacts.is_none() {
                out.insert(Violation::ModeMismatch {
                    mode: record.mode,
                    detail: "artifacts missing".into(),
                });
            }
            if record.declared_tally.is_some() {
                out.insert(Violation::ModeMismatch {
                    mode: record.mode,
                    detail: "declared_tally present".into(),
                });
            }
        }
        RecordMode::Tally => {
            if record.declared_tally.is_none() {
                out.insert(Violation::ModeMismatch {
                    mode: record.mode,
                    detail: "declared_tally missing".into(),
                });
            }
            if record.artifacts.is_some() {
                out.insert(Violation::ModeMismatch {
                    mode: record.mode,
                    detail: "artifacts present".into(),
                });
            }
        }
    }

    if let Some(artifacts) = &record.artifacts {
        let mut seen = BTreeSet::new();
        for a in artifacts {
            if a.id.is_empty() {
                out.insert(Violation::EmptyArtifactId);
            } else if !seen.insert(a.id.as_str()) {
                out.insert(Violation::DuplicateArtifactId { id: a.id.clone() });
            }
        }
    }
    if let Some(t) = &record.declared_tally {
        out.extend(t.violations());
    }

    out.into_iter().collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TallyError {
    #[error("tp ({tp}) + fp ({fp}) != retrieved ({retrieved})")]
    RetrievedMismatch { tp: u64, fp: u64, retrieved: u64 },
    #[error("tp ({tp}) + fn ({fn_}) != relevant ({relevant})")]
    RelevantMismatch { tp: u64, fn_: u64, relevant: u64 },
}

/// Confusion counts for one candidate compared against one gold record.
///
/// Construction enforces `tp + fp = retrieved` and `tp + fn = relevant`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct ConfusionTally {
    true_positives: u64,
    false_positives: u64,
    false_negatives: u64,
    retrieved: u64,
    relevant: u64,
}

impl ConfusionTally {
    pub fn new(true_positives: u64, false_positives: u64, false_negatives: u64) -> Self {
        Self {
            true_positives,
            false_positives,
            false_negatives,
            retrieved: true_positives + false_positives,
            relevant: true_positives + false_negatives,
        }
    }

    /// Builds a tally from all five counts, rejecting inconsistent ones.
    pub fn from_counts(
        tp: u64,
        fp: u64,
        fn_: u64,
        retrieved: u64,
        relevant: u64,
    ) -> Result<Self, TallyError> {
        if tp.checked_add(fp) != Some(retrieved) {
            return Err(TallyError::RetrievedMismatch { tp, fp, retrieved });
        }
        if tp.checked_add(fn_) != Some(relevant) {
            return Err(TallyError::RelevantMismatch { tp, fn_, relevant });
        }
        Ok(Self::new(tp, fp, fn_))
    }

    pub fn true_positives(&self) -> u64 {
        self.true_positives
    }

    pub fn false_positives(&self) -> u64 {
        self.false_positives
    }

    pub fn false_negatives(&self) -> u64 {
        self.false_negatives
    }

    pub fn retrieved(&self) -> u64 {
        self.retrieved
    }

    pub fn relevant(&self) -> u64 {
        self.relevant
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedReason {
    ZeroDenominator,
    GoldEmpty,
}

impl UndefinedReason {
    /// Combines two reasons; an empty gold standard outranks a zero denominator.
    pub fn dominant(self, other: Self) -> Self {
        if self == UndefinedReason::GoldEmpty || other == UndefinedReason::GoldEmpty {
            UndefinedReason::GoldEmpty
        } else {
            UndefinedReason::ZeroDenominator
        }
    }
}

/// A ratio in `[0, 1]`, or the reason it cannot be computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", content = "value", rename_all = "snake_case")]
pub enum MetricValue {
    Defined(f64),
    Undefined(UndefinedReason),
}

impl MetricValue {
    /// `numerator / denominator`, undefined with `reason` when the denominator is zero.
    pub fn ratio(numerator: u64, denominator: u64, reason: UndefinedReason) -> Self {
        if denominator == 0 {
            MetricValue::Undefined(reason)
        } else {
            MetricValue::Defined(numerator as f64 / denominator as f64)
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            MetricValue::Defined(v) => Some(v),
            MetricValue::Undefined(_) => None,
        }
    }

    pub fn is_defined(self) -> bool {
        matches!(self, MetricValue::Defined(_))
    }

    pub fn undefined_reason(self) -> Option<UndefinedReason> {
        match self {
            MetricValue::Defined(_) => None,
            MetricValue::Undefined(r) => Some(r),
        }
    }

    /// The value, with undefined read as zero.
    pub fn or_zero(self) -> f64 {
        self.value().unwrap_or(0.0)
    }
}
