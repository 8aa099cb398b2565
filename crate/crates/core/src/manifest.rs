//! Reading and writing single-record JSON manifests.

use serde_json::Value;
use thiserror::Error;

use crate::model::{validate_record, ExaminationRecord, Violation};

const REQUIRED_FIELDS: &[&str] = &[
    "schema",
    "case_id",
    "exhibit_id",
    "examiner_id",
    "process_id",
    "role",
    "timestamp",
    "mode",
];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("manifest must be a JSON object")]
    NotAnObject,
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("invalid field value: {0}")]
    Field(String),
    #[error("record violates {} invariant(s): {}", .0.len(), join(.0))]
    Invalid(Vec<Violation>),
}

fn join(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// Parses and validates one manifest document.
pub fn parse_manifest(bytes: &[u8]) -> Result<ExaminationRecord, ManifestError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| ManifestError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let obj = value.as_object().ok_or(ManifestError::NotAnObject)?;
    if let Some(field) = REQUIRED_FIELDS.iter().find(|f| !obj.contains_key(**f)) {
        return Err(ManifestError::MissingField(field));
    }
    let record: ExaminationRecord =
        serde_json::from_value(value).map_err(|e| ManifestError::Field(e.to_string()))?;
    let violations = validate_record(&record);
    if !violations.is_empty() {
        return Err(ManifestError::Invalid(violations));
    }
    Ok(record)
}

/// Pretty-printed manifest text, newline-terminated.
pub fn to_manifest(record: &ExaminationRecord) -> String {
    let mut s = serde_json::to_string_pretty(record).expect("record serializes");
    s.push('\n');
    s
}

/// Single-line form used in the ledger.
pub fn to_ledger_line(record: &ExaminationRecord) -> String {
    serde_json::to_string(record).expect("record serializes")
}
