//! Precision, recall, F-measure, object-identification error rates,
//! decision error rates and macro-aggregation.
//!
//! Everything is computed in double precision from unrounded ratios.
//! Rounding happens only when values are rendered.

use serde::Serialize;
use thiserror::Error;

use crate::model::{ConfusionTally, Decision, MetricValue, UndefinedReason};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("candidate tally has {candidate} relevant items but the gold record has {gold}")]
    RelevantMismatch { gold: u64, candidate: u64 },
    #[error("cannot aggregate an empty list of cases")]
    EmptyCases,
    #[error("cannot compute decision error rates from an empty list")]
    EmptyDecisions,
}

/// Fraction of retrieved items that are relevant.
pub fn precision(tally: &ConfusionTally) -> MetricValue {
    MetricValue::ratio(
        tally.true_positives(),
        tally.retrieved(),
        UndefinedReason::ZeroDenominator,
    )
}

/// Fraction of gold-standard items that were retrieved.
pub fn recall(tally: &ConfusionTally) -> MetricValue {
    MetricValue::ratio(
        tally.true_positives(),
        tally.relevant(),
        UndefinedReason::GoldEmpty,
    )
}

/// Harmonic mean of precision and recall.
///
/// `P = R = 0` yields a defined zero rather than undefined.
pub fn f_measure(p: MetricValue, r: MetricValue) -> MetricValue {
    match (p, r) {
        (MetricValue::Undefined(a), MetricValue::Undefined(b)) => {
            MetricValue::Undefined(a.dominant(b))
        }
        (MetricValue::Undefined(a), _) | (_, MetricValue::Undefined(a)) => {
            MetricValue::Undefined(a)
        }
        (MetricValue::Defined(p), MetricValue::Defined(r)) => {
            if p + r == 0.0 {
                MetricValue::Defined(0.0)
            } else {
                MetricValue::Defined(2.0 * p * r / (p + r))
            }
        }
    }
}

/// Scores for one candidate examination against its gold standard.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaseMetrics {
    pub tally: ConfusionTally,
    pub precision: MetricValue,
    pub recall: MetricValue,
    pub f_measure: MetricValue,
    /// `fp / retrieved`
    pub fp_error: MetricValue,
    /// `fn / relevant`
    pub fn_error: MetricValue,
}

impl CaseMetrics {
    pub fn from_tally(tally: ConfusionTally) -> Self {
        let p = precision(&tally);
        let r = recall(&tally);
        Self {
            tally,
            precision: p,
            recall: r,
            f_measure: f_measure(p, r),
            fp_error: MetricValue::ratio(
                tally.false_positives(),
                tally.retrieved(),
                UndefinedReason::ZeroDenominator,
            ),
            fn_error: MetricValue::ratio(
                tally.false_negatives(),
                tally.relevant(),
                UndefinedReason::GoldEmpty,
            ),
        }
    }

    /// True when the gold standard found nothing, so accuracy does not apply.
    pub fn gold_empty(&self) -> bool {
        self.tally.relevant() == 0
    }
}

/// Scores `candidate`, checking that it was paired with the right gold record.
pub fn score_case(gold_relevant: u64, candidate: ConfusionTally) -> Result<CaseMetrics, MetricsError> {
    if candidate.relevant() != gold_relevant {
        return Err(MetricsError::RelevantMismatch {
            gold: gold_relevant,
            candidate: candidate.relevant(),
        });
    }
    Ok(CaseMetrics::from_tally(candidate))
}

/// How a mean treats cases whose metric is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum UndefinedHandling {
    /// Average defined values only.
    Skip,
    /// Count undefined as zero and divide by the total number of cases.
    ZeroFill,
}

/// Undefined handling per metric family. The default averages accuracy
/// metrics over defined cases and error rates over all cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct AggregationPolicy {
    pub accuracy: UndefinedHandling,
    pub error_rates: UndefinedHandling,
}

impl Default for AggregationPolicy {
    fn default() -> Self {
        Self {
            accuracy: UndefinedHandling::Skip,
            error_rates: UndefinedHandling::ZeroFill,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateMetrics {
    pub mean_precision: MetricValue,
    pub mean_recall: MetricValue,
    pub mean_f: MetricValue,
    pub mean_fp_error: MetricValue,
    pub mean_fn_error: MetricValue,
    pub n_cases: usize,
    pub n_undefined_f: usize,
    pub policy: AggregationPolicy,
}

fn mean_of(values: impl Iterator<Item = MetricValue>, handling: UndefinedHandling) -> MetricValue {
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut total = 0usize;
    let mut reason: Option<UndefinedReason> = None;
    for v in values {
        total += 1;
        match v {
            MetricValue::Defined(x) => {
                sum += x;
                count += 1;
            }
            MetricValue::Undefined(r) => {
                reason = Some(reason.map_or(r, |prev| prev.dominant(r)));
            }
        }
    }
    match handling {
        UndefinedHandling::ZeroFill => MetricValue::Defined(sum / total as f64),
        UndefinedHandling::Skip if count == 0 => {
            MetricValue::Undefined(reason.unwrap_or(UndefinedReason::ZeroDenominator))
        }
        UndefinedHandling::Skip => MetricValue::Defined(sum / count as f64),
    }
}

/// Arithmetic mean of each metric over `cases`.
pub fn macro_average(
    cases: &[CaseMetrics],
    policy: AggregationPolicy,
) -> Result<AggregateMetrics, MetricsError> {
    if cases.is_empty() {
        return Err(MetricsError::EmptyCases);
    }
    let it = || cases.iter();
    Ok(AggregateMetrics {
        mean_precision: mean_of(it().map(|c| c.precision), policy.accuracy),
        mean_recall: mean_of(it().map(|c| c.recall), policy.accuracy),
        mean_f: mean_of(it().map(|c| c.f_measure), policy.accuracy),
        mean_fp_error: mean_of(it().map(|c| c.fp_error), policy.error_rates),
        mean_fn_error: mean_of(it().map(|c| c.fn_error), policy.error_rates),
        n_cases: cases.len(),
        n_undefined_f: it().filter(|c| !c.f_measure.is_defined()).count(),
        policy,
    })
}

/// Exhibit-level further-analysis error counts for one examiner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionErrorRates {
    pub examiner_id: String,
    pub n_cases: usize,
    pub decision_fp: usize,
    pub decision_fp_rate: f64,
    pub decision_fn: usize,
    pub decision_fn_rate: f64,
}

/// Counts wrong further-analysis calls. Each pair is `(gold, candidate)`.
pub fn decision_confusion(
    examiner_id: impl Into<String>,
    pairs: &[(Decision, Decision)],
) -> Result<DecisionErrorRates, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyDecisions);
    }
    let fp = pairs
        .iter()
        .filter(|(gold, cand)| !gold.is_yes() && cand.is_yes())
        .count();
    let fn_ = pairs
        .iter()
        .filter(|(gold, cand)| gold.is_yes() && !cand.is_yes())
        .count();
    let n = pairs.len();
    Ok(DecisionErrorRates {
        examiner_id: examiner_id.into(),
        n_cases: n,
        decision_fp: fp,
        decision_fp_rate: fp as f64 / n as f64,
        decision_fn: fn_,
        decision_fn_rate: fn_ as f64 / n as f64,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", content = "value", rename_all = "snake_case")]
pub enum Delta {
    Defined(f64),
    Incomparable,
}

impl Delta {
    fn between(a: MetricValue, b: MetricValue) -> Self {
        match (a, b) {
            (MetricValue::Defined(x), MetricValue::Defined(y)) => Delta::Defined(x - y),
            _ => Delta::Incomparable,
        }
    }

    pub fn value(self) -> Option<f64> {
        match self {
            Delta::Defined(v) => Some(v),
            Delta::Incomparable => None,
        }
    }
}

/// Signed differences `a - b` of each mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessComparison {
    pub precision: Delta,
    pub recall: Delta,
    pub f_measure: Delta,
    pub fp_error: Delta,
    pub fn_error: Delta,
}

pub fn compare_processes(a: &AggregateMetrics, b: &AggregateMetrics) -> ProcessComparison {
    ProcessComparison {
        precision: Delta::between(a.mean_precision, b.mean_precision),
        recall: Delta::between(a.mean_recall, b.mean_recall),
        f_measure: Delta::between(a.mean_f, b.mean_f),
        fp_error: Delta::between(a.mean_fp_error, b.mean_fp_error),
        fn_error: Delta::between(a.mean_fn_error, b.mean_fn_error),
    }
}
