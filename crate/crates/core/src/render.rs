//! Presentation rounding. Values are rounded half-up to two decimals only
//! here; every computation upstream stays unrounded.

use crate::metrics::CaseMetrics;
use crate::model::MetricValue;

/// Text used for an undefined metric in tables.
pub const NOT_APPLICABLE: &str = "n/a";

/// Slack absorbing binary representation error, so that e.g. 0.475
/// (stored as 0.47499999...) rounds up as decimal arithmetic would.
const HALF_UP_SLACK: f64 = 1e-9;

/// `x` in hundredths, rounded half-up.
pub fn hundredths(x: f64) -> i64 {
    (x * 100.0 + 0.5 + HALF_UP_SLACK).floor() as i64
}

pub fn round2(x: f64) -> f64 {
    hundredths(x) as f64 / 100.0
}

/// Two-decimal rendering, `-0.00` normalised to `0.00`.
pub fn fmt2(x: f64) -> String {
    let h = hundredths(x);
    let sign = if h < 0 { "-" } else { "" };
    let a = h.unsigned_abs();
    format!("{sign}{}.{:02}", a / 100, a % 100)
}

/// Signed two-decimal rendering, e.g. `+0.24`.
pub fn fmt2_signed(x: f64) -> String {
    let s = fmt2(x);
    if s.starts_with('-') {
        s
    } else {
        format!("+{s}")
    }
}

pub fn fmt_metric(m: MetricValue) -> String {
    m.value().map_or_else(|| NOT_APPLICABLE.to_string(), fmt2)
}

/// Accuracy cell of a case. Accuracy does not apply when the gold standard
/// found nothing, so all three accuracy cells read "n/a" then, even a
/// defined precision of zero.
pub fn fmt_accuracy(case: &CaseMetrics, value: MetricValue) -> String {
    if case.gold_empty() {
        NOT_APPLICABLE.to_string()
    } else {
        fmt_metric(value)
    }
}

/// Full-precision rendering for CSV output; empty when undefined.
pub fn full_precision(m: MetricValue) -> String {
    m.value().map_or_else(String::new, |v| format!("{v}"))
}
