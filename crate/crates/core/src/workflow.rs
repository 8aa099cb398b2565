//! Measurement campaigns, sample scheduling, the decision gate and
//! longitudinal trend alerts.

use std::fmt;

use chrono::{DateTime, FixedOffset};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{CaseMetrics, DecisionErrorRates};
use crate::model::{MetricValue, UndefinedReason};

pub const CAMPAIGN_SCHEMA: &str = "fah-campaign/1";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("step {0} does not exist; steps are numbered 1 to 6")]
    NoSuchStep(usize),
    #[error("step {requested} cannot be completed before step {next_pending}")]
    OutOfOrder { requested: usize, next_pending: usize },
    #[error("step {0} is already done")]
    AlreadyDone(usize),
    #[error("sampling interval must be at least 1")]
    ZeroInterval,
    #[error("sampling phase {phase} must be below the interval {interval}")]
    PhaseOutOfRange { phase: u64, interval: u64 },
    #[error("trend window must be at least 1")]
    ZeroWindow,
    #[error("drop threshold {0} must lie in [0, 1)")]
    BadThreshold(f64),
    #[error("trend needs at least one point")]
    EmptySeries,
    #[error("unsupported campaign schema {0:?}")]
    Schema(String),
}

/// The six stages of putting a measured process into service.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    IdentifyMeasuredProcess,
    IdentifyGoldStandard,
    PlanWorkflowIntegration,
    ConductMeasuredProcess,
    ConductGoldStandardProcess,
    MeasureAgainstGoldStandard,
}

impl Step {
    pub const ALL: [Step; 6] = [
        Step::IdentifyMeasuredProcess,
        Step::IdentifyGoldStandard,
        Step::PlanWorkflowIntegration,
        Step::ConductMeasuredProcess,
        Step::ConductGoldStandardProcess,
        Step::MeasureAgainstGoldStandard,
    ];

    pub fn number(self) -> usize {
        Step::ALL.iter().position(|s| *s == self).unwrap() + 1
    }

    pub fn description(self) -> &'static str {
        match self {
            Step::IdentifyMeasuredProcess => "identify what is being measured",
            Step::IdentifyGoldStandard => "identify the gold standard",
            Step::PlanWorkflowIntegration => "plan how the measured process fits the workflow",
            Step::ConductMeasuredProcess => "conduct the measured process",
            Step::ConductGoldStandardProcess => "conduct the gold standard process",
            Step::MeasureAgainstGoldStandard => "measure output against the gold standard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StepStatus {
    Pending,
    Done { evidence: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepEntry {
    pub step: Step,
    #[serde(flatten)]
    pub status: StepStatus,
}

/// Binds a measured process to a gold-standard process and a sampling plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementCampaign {
    pub schema: String,
    pub campaign_id: String,
    pub measured_process: String,
    pub gold_process: String,
    pub steps: Vec<StepEntry>,
    pub sampling: SamplingPlan,
    #[serde(default)]
    pub needs_review: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub notes: String,
}

impl MeasurementCampaign {
    pub fn new(
        campaign_id: impl Into<String>,
        measured_process: impl Into<String>,
        gold_process: impl Into<String>,
        sampling: SamplingPlan,
    ) -> Self {
        Self {
            schema: CAMPAIGN_SCHEMA.to_string(),
            campaign_id: campaign_id.into(),
            measured_process: measured_process.into(),
            gold_process: gold_process.into(),
            steps: Step::ALL
                .iter()
                .map(|&step| StepEntry {
                    step,
                    status: StepStatus::Pending,
                })
                .collect(),
            sampling,
            needs_review: false,
            notes: String::new(),
        }
    }

    /// Checks the schema tag and that all six steps are listed in order.
    pub fn check(&self) -> Result<(), WorkflowError> {
        if self.schema != CAMPAIGN_SCHEMA {
            return Err(WorkflowError::Schema(self.schema.clone()));
        }
        let steps: Vec<Step> = self.steps.iter().map(|e| e.step).collect();
        if steps != Step::ALL {
            return Err(WorkflowError::Schema("campaign steps out of order".into()));
        }
        if let Some(next) = self.next_pending() {
            if let Some(late) = self.steps[next - 1..]
                .iter()
                .find(|e| e.status != StepStatus::Pending)
            {
                return Err(WorkflowError::OutOfOrder {
                    requested: late.step.number(),
                    next_pending: next,
                });
            }
        }
        Ok(())
    }

    /// Number of the first pending step, if any.
    pub fn next_pending(&self) -> Option<usize> {
        self.steps
            .iter()
            .find(|e| e.status == StepStatus::Pending)
            .map(|e| e.step.number())
    }

    pub fn advance(&mut self, step: usize, evidence: impl Into<String>) -> Result<(), WorkflowError> {
        if !(1..=Step::ALL.len()).contains(&step) {
            return Err(WorkflowError::NoSuchStep(step));
        }
        match self.next_pending() {
            Some(next) if next == step => {
                self.steps[step - 1].status = StepStatus::Done {
                    evidence: evidence.into(),
                };
                Ok(())
            }
            Some(next) if step < next => Err(WorkflowError::AlreadyDone(step)),
            Some(next) => Err(WorkflowError::OutOfOrder {
                requested: step,
                next_pending: next,
            }),
            None => Err(WorkflowError::AlreadyDone(step)),
        }
    }

    pub fn is_complete(&self) -> bool {
        self.next_pending().is_none()
    }

    /// Scores may be produced once steps 1 to 5 are done.
    pub fn scoring_permitted(&self) -> bool {
        self.next_pending().is_none_or(|n| n > 5)
    }
}

/// Which cases receive full measurement.
///
/// Ordinals are 1-based. `Interval { n, phase }` selects ordinals with
/// `ordinal % n == phase`, so phase 0 selects `n, 2n, ...`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", try_from = "RawPlan")]
pub enum SamplingPlan {
    Full,
    Interval { n: u64, phase: u64 },
}

#[derive(Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
enum RawPlan {
    Full,
    Interval { n: u64, phase: u64 },
}

impl TryFrom<RawPlan> for SamplingPlan {
    type Error = WorkflowError;

    fn try_from(raw: RawPlan) -> Result<Self, Self::Error> {
        match raw {
            RawPlan::Full => Ok(SamplingPlan::Full),
            RawPlan::Interval { n, phase } => SamplingPlan::interval(n, phase),
        }
    }
}

impl SamplingPlan {
    pub fn interval(n: u64, phase: u64) -> Result<Self, WorkflowError> {
        if n == 0 {
            return Err(WorkflowError::ZeroInterval);
        }
        if phase >= n {
            return Err(WorkflowError::PhaseOutOfRange { phase, interval: n });
        }
        Ok(SamplingPlan::Interval { n, phase })
    }

    /// Interval plan with a uniformly drawn phase, so the measured cases
    /// cannot be anticipated.
    pub fn random_phase<R: Rng + ?Sized>(n: u64, rng: &mut R) -> Result<Self, WorkflowError> {
        if n == 0 {
            return Err(WorkflowError::ZeroInterval);
        }
        Self::interval(n, rng.gen_range(0..n))
    }

    pub fn is_measured_case(&self, ordinal: u64) -> bool {
        match *self {
            _ if ordinal == 0 => false,
            SamplingPlan::Full => true,
            SamplingPlan::Interval { n, phase } => ordinal % n == phase,
        }
    }

    /// First selected ordinal.
    fn first(&self) -> u64 {
        match *self {
            SamplingPlan::Full => 1,
            SamplingPlan::Interval { n, phase: 0 } => n,
            SamplingPlan::Interval { phase, .. } => phase,
        }
    }

    fn step(&self) -> u64 {
        match *self {
            SamplingPlan::Full => 1,
            SamplingPlan::Interval { n, .. } => n,
        }
    }

    /// How many of the ordinals `1..=total` are measured.
    pub fn measured_count(&self, total: u64) -> u64 {
        let first = self.first();
        if total < first {
            0
        } else {
            (total - first) / self.step() + 1
        }
    }

    /// The next `count` measured ordinals strictly after `after`.
    pub fn upcoming(&self, after: u64, count: usize) -> Vec<u64> {
        let first = self.first();
        let step = self.step();
        let start = if after < first {
            first
        } else {
            first + ((after - first) / step + 1) * step
        };
        (0..count as u64).map(|i| start + i * step).collect()
    }
}

impl fmt::Display for SamplingPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SamplingPlan::Full => f.write_str("every case"),
            SamplingPlan::Interval { n, phase } => write!(f, "every {n} cases (phase {phase})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum GateOutcome {
    Pass,
    Fail(String),
}

impl GateOutcome {
    pub fn passed(&self) -> bool {
        *self == GateOutcome::Pass
    }
}

/// Exhibits holding relevant material must never be screened out.
/// Decision false positives are tolerated.
pub fn decision_gate_check(rates: &DecisionErrorRates) -> GateOutcome {
    if rates.decision_fn == 0 {
        GateOutcome::Pass
    } else {
        GateOutcome::Fail(format!(
            "{}: {} of {} exhibits with relevant material were not sent for further analysis",
            rates.examiner_id, rates.decision_fn, rates.n_cases
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendConfig {
    pub window: usize,
    pub drop_threshold: f64,
    pub recall_floor: f64,
}

impl Default for TrendConfig {
    fn default() -> Self {
        Self {
            window: 4,
            drop_threshold: 0.25,
            recall_floor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AlertKind {
    FDrop,
    RecallFloor,
}

impl fmt::Display for AlertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlertKind::FDrop => "f_drop",
            AlertKind::RecallFloor => "recall_floor",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendAlert {
    pub index: usize,
    pub kind: AlertKind,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendPoint {
    pub timestamp: DateTime<FixedOffset>,
    pub metrics: CaseMetrics,
    /// Mean F over the window ending at this point, defined entries only.
    pub trailing_mean_f: MetricValue,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSeries {
    pub points: Vec<TrendPoint>,
    pub window: usize,
    pub alerts: Vec<TrendAlert>,
}

fn defined_mean(values: impl Iterator<Item = MetricValue>) -> MetricValue {
    let (sum, n) = values
        .filter_map(MetricValue::value)
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        MetricValue::Undefined(UndefinedReason::ZeroDenominator)
    } else {
        MetricValue::Defined(sum / n as f64)
    }
}

/// Orders points by time and flags F drops and sustained low recall.
///
/// An `f_drop` fires at `i` when `F_i` falls below the mean F of the
/// `window` points before `i`, scaled by `1 - drop_threshold`. A
/// `recall_floor` fires at `i` when the `window` points ending at `i` average
/// a recall below the floor. Alerts at `i` depend only on points `0..=i`.
pub fn trend_series(
    mut points: Vec<(DateTime<FixedOffset>, CaseMetrics)>,
    config: &TrendConfig,
) -> Result<TrendSeries, WorkflowError> {
    if points.is_empty() {
        return Err(WorkflowError::EmptySeries);
    }
    if config.window == 0 {
        return Err(WorkflowError::ZeroWindow);
    }
    if !(0.0..1.0).contains(&config.drop_threshold) {
        return Err(WorkflowError::BadThreshold(config.drop_threshold));
    }
    points.sort_by_key(|(ts, _)| *ts);
    let w = config.window;

    let mut alerts = Vec::new();
    let mut out = Vec::with_capacity(points.len());
    for i in 0..points.len() {
        let (ts, m) = points[i];
        let lo = (i + 1).saturating_sub(w);
        let trailing = defined_mean(points[lo..=i].iter().map(|(_, m)| m.f_measure));

        if let (Some(f), Some(before)) = (
            m.f_measure.value(),
            defined_mean(points[i.saturating_sub(w)..i].iter().map(|(_, m)| m.f_measure)).value(),
        ) {
            let limit = before * (1.0 - config.drop_threshold);
            if f < limit {
                alerts.push(TrendAlert {
                    index: i,
                    kind: AlertKind::FDrop,
                    detail: format!(
                        "F {f:.4} below {limit:.4} (prior mean {before:.4} less {:.0}%)",
                        config.drop_threshold * 100.0
                    ),
                });
            }
        }

        if i + 1 >= w {
            if let Some(r) = defined_mean(points[lo..=i].iter().map(|(_, m)| m.recall)).value() {
                if r < config.recall_floor {
                    alerts.push(TrendAlert {
                        index: i,
                        kind: AlertKind::RecallFloor,
                        detail: format!(
                            "mean recall {r:.4} over last {w} below {:.2}",
                            config.recall_floor
                        ),
                    });
                }
            }
        }

        out.push(TrendPoint {
            timestamp: ts,
            metrics: m,
            trailing_mean_f: trailing,
        });
    }

    Ok(TrendSeries {
        points: out,
        window: w,
        alerts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::decision_confusion;
    use crate::model::{ConfusionTally, Decision};

    #[test]
    fn campaign_advances_in_order() {
        let mut c = MeasurementCampaign::new("c", "triage-v1", "full-analysis", SamplingPlan::Full);
        c.advance(1, "preliminary analysis unit").unwrap();
        assert!(matches!(c.steps[0].status, StepStatus::Done { .. }));
        assert_eq!(
            c.advance(3, "x"),
            Err(WorkflowError::OutOfOrder {
                requested: 3,
                next_pending: 2
            })
        );
        assert_eq!(c.advance(1, "again"), Err(WorkflowError::AlreadyDone(1)));
        assert_eq!(c.advance(7, "x"), Err(WorkflowError::NoSuchStep(7)));
        for s in 2..=5 {
            c.advance(s, format!("step {s}")).unwrap();
        }
        assert!(c.scoring_permitted());
        assert!(!c.is_complete());
        c.advance(6, "scored").unwrap();
        assert!(c.is_complete());
        c.check().unwrap();
    }

    #[test]
    fn scoring_not_permitted_early() {
        let mut c = MeasurementCampaign::new("c", "a", "b", SamplingPlan::Full);
        for s in 1..=4 {
            c.advance(s, "").unwrap();
        }
        assert!(!c.scoring_permitted());
    }

    #[test]
    fn check_rejects_gap() {
        let mut c = MeasurementCampaign::new("c", "a", "b", SamplingPlan::Full);
        c.steps[2].status = StepStatus::Done {
            evidence: "x".into(),
        };
        assert!(c.check().is_err());
    }

    #[test]
    fn sampling_every_tenth() {
        let plan = SamplingPlan::interval(10, 0).unwrap();
        let hits: Vec<u64> = (1..=25).filter(|&o| plan.is_measured_case(o)).collect();
        assert_eq!(hits, vec![10, 20]);
        assert!((1..100).all(|o| SamplingPlan::Full.is_measured_case(o)));
        let every = SamplingPlan::interval(1, 0).unwrap();
        assert!((1..100).all(|o| every.is_measured_case(o)));
    }

    #[test]
    fn sampling_upcoming() {
        let p = SamplingPlan::interval(10, 0).unwrap();
        assert_eq!(p.upcoming(0, 3), vec![10, 20, 30]);
        assert_eq!(p.upcoming(10, 2), vec![20, 30]);
        assert_eq!(p.upcoming(15, 1), vec![20]);
        let p = SamplingPlan::interval(10, 3).unwrap();
        assert_eq!(p.upcoming(0, 3), vec![3, 13, 23]);
        let p = SamplingPlan::interval(1, 0).unwrap();
        assert_eq!(p.upcoming(0, 3), vec![1, 2, 3]);
    }

    #[test]
    fn sampling_rejects_bad_plans() {
        assert_eq!(SamplingPlan::interval(0, 0), Err(WorkflowError::ZeroInterval));
        assert!(SamplingPlan::interval(10, 10).is_err());
        assert!(serde_json::from_str::<SamplingPlan>(r#"{"mode":"interval","n":3,"phase":5}"#).is_err());
    }

    #[test]
    fn random_phase_is_in_range() {
        let mut rng = rand::thread_rng();
        for _ in 0..100 {
            match SamplingPlan::random_phase(10, &mut rng).unwrap() {
                SamplingPlan::Interval { n, phase } => assert!(n == 10 && phase < 10),
                SamplingPlan::Full => unreachable!(),
            }
        }
    }

    #[test]
    fn gate() {
        use Decision::{FurtherAnalysisNo as N, FurtherAnalysisYes as Y};
        let pass = decision_confusion("e", &[(N, Y), (N, Y), (Y, Y)]).unwrap();
        assert_eq!(decision_gate_check(&pass), GateOutcome::Pass);
        let fail = decision_confusion("e", &[(Y, N), (N, N)]).unwrap();
        assert!(!decision_gate_check(&fail).passed());
        let clean = decision_confusion("e", &[(Y, Y), (N, N)]).unwrap();
        assert!(decision_gate_check(&clean).passed());
    }

    fn ts(day: u32) -> DateTime<FixedOffset> {
        DateTime::parse_from_rfc3339(&format!("2013-01-{day:02}T00:00:00+00:00")).unwrap()
    }

    fn point(day: u32, tp: u64, fp: u64, fn_: u64) -> (DateTime<FixedOffset>, CaseMetrics) {
        (ts(day), CaseMetrics::from_tally(ConfusionTally::new(tp, fp, fn_)))
    }

    #[test]
    fn constant_series_has_no_alerts() {
        let pts = (1..=8).map(|d| point(d, 4, 1, 1)).collect();
        let s = trend_series(pts, &TrendConfig::default()).unwrap();
        assert!(s.alerts.is_empty());
    }

    #[test]
    fn points_sorted_by_time() {
        let pts = vec![point(3, 1, 0, 0), point(1, 1, 1, 1), point(2, 2, 0, 0)];
        let s = trend_series(pts, &TrendConfig::default()).unwrap();
        let days: Vec<_> = s.points.iter().map(|p| p.timestamp).collect();
        assert_eq!(days, vec![ts(1), ts(2), ts(3)]);
    }

    #[test]
    fn trend_rejects_bad_input() {
        assert_eq!(
            trend_series(vec![], &TrendConfig::default()),
            Err(WorkflowError::EmptySeries)
        );
        let cfg = TrendConfig {
            window: 0,
            ..TrendConfig::default()
        };
        assert_eq!(
            trend_series(vec![point(1, 1, 0, 0)], &cfg),
            Err(WorkflowError::ZeroWindow)
        );
    }
}
