//! Accuracy measurement for forensic artifact extraction and
//! categorization, scored against a peer-reviewed gold standard.

// Errors carry the offending record key; they are rare and not on a hot path.
#![allow(clippy::result_large_err)]

pub mod manifest;
pub mod matching;
pub mod metrics;
pub mod model;
pub mod plot;
pub mod render;
pub mod report;
pub mod scoring;
pub mod store;
pub mod verify;
pub mod workflow;

pub use metrics::{
    compare_processes, decision_confusion, f_measure, macro_average, precision, recall,
    score_case, AggregateMetrics, AggregationPolicy, CaseMetrics, DecisionErrorRates,
    ProcessComparison,
};
pub use model::{
    validate_record, Artifact, Category, ConfusionTally, Decision, DeclaredTally,
    ExaminationRecord, MetricValue, RecordMode, Role, UndefinedReason,
};
pub use store::CaseStore;
