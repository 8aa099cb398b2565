//! Consolidated campaign reports and trend grouping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;
use thiserror::Error;

use crate::metrics::{
    compare_processes, decision_confusion, macro_average, AggregateMetrics, AggregationPolicy,
    DecisionErrorRates, ProcessComparison,
};
use crate::render::{fmt2, fmt2_signed, fmt_metric};
use crate::scoring::{score_store, CaseFilter, ScoreError, ScoredCase};
use crate::store::CaseStore;
use crate::workflow::{
    decision_gate_check, trend_series, GateOutcome, MeasurementCampaign, TrendConfig, TrendSeries,
    WorkflowError,
};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("campaign {0:?} has not completed steps 1-5; scoring is not yet permitted")]
    NotReady(String),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Workflow(#[from] WorkflowError),
    #[error("unknown group-by key {0:?} (expected examiner, process, case or all)")]
    UnknownGroupBy(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExaminerSummary {
    pub examiner_id: String,
    pub aggregate: AggregateMetrics,
    /// Absent when none of the examiner's records carry a decision.
    pub decisions: Option<DecisionErrorRates>,
    pub gate: Option<GateOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CampaignReport {
    pub campaign_id: String,
    pub measured_process: String,
    pub gold_process: String,
    pub sampling: String,
    pub n_scored: usize,
    pub unit: Option<AggregateMetrics>,
    pub examiners: Vec<ExaminerSummary>,
    pub needs_review: bool,
    pub comparison: Option<(String, ProcessComparison)>,
}

/// Cases a campaign scores: its measured process against its gold process.
pub fn campaign_cases(
    store: &CaseStore,
    campaign: &MeasurementCampaign,
) -> Result<Vec<ScoredCase>, ReportError> {
    if !campaign.scoring_permitted() {
        return Err(ReportError::NotReady(campaign.campaign_id.clone()));
    }
    let filter = CaseFilter {
        process_id: Some(campaign.measured_process.clone()),
        gold_process_id: Some(campaign.gold_process.clone()),
        ..CaseFilter::default()
    };
    // Only exhibits that have a measured candidate take part, so pending
    // exhibits of unrelated processes do not block the report.
    let relevant: Vec<(String, String)> = store
        .records()
        .iter()
        .filter(|r| r.process_id == campaign.measured_process)
        .map(|r| (r.case_id.clone(), r.exhibit_id.clone()))
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut out = Vec::new();
    for (case_id, exhibit_id) in relevant {
        let f = CaseFilter {
            case_id: Some(case_id),
            exhibit_id: Some(exhibit_id),
            ..filter.clone()
        };
        out.extend(score_store(store, &f)?);
    }
    Ok(out)
}

fn unit_aggregate(cases: &[ScoredCase]) -> Option<AggregateMetrics> {
    let metrics: Vec<_> = cases.iter().map(|c| c.metrics).collect();
    macro_average(&metrics, AggregationPolicy::default()).ok()
}

pub fn campaign_report(
    store: &CaseStore,
    campaign: &MeasurementCampaign,
    baseline: Option<&MeasurementCampaign>,
) -> Result<CampaignReport, ReportError> {
    let cases = campaign_cases(store, campaign)?;

    let mut by_examiner: BTreeMap<&str, Vec<&ScoredCase>> = BTreeMap::new();
    for c in &cases {
        by_examiner.entry(c.examiner_id.as_str()).or_default().push(c);
    }
    let mut examiners = Vec::new();
    for (examiner_id, list) in by_examiner {
        let metrics: Vec<_> = list.iter().map(|c| c.metrics).collect();
        let aggregate = macro_average(&metrics, AggregationPolicy::default())
            .expect("non-empty examiner group");
        let pairs: Vec<_> = list
            .iter()
            .filter_map(|c| c.candidate_decision.map(|d| (c.gold_decision, d)))
            .collect();
        let decisions = decision_confusion(examiner_id, &pairs).ok();
        let gate = decisions.as_ref().map(decision_gate_check);
        examiners.push(ExaminerSummary {
            examiner_id: examiner_id.to_string(),
            aggregate,
            decisions,
            gate,
        });
    }

    let unit = unit_aggregate(&cases);
    let comparison = match (baseline, &unit) {
        (Some(b), Some(u)) => {
            let base_cases = campaign_cases(store, b)?;
            unit_aggregate(&base_cases).map(|bu| (b.campaign_id.clone(), compare_processes(u, &bu)))
        }
        _ => None,
    };

    Ok(CampaignReport {
        campaign_id: campaign.campaign_id.clone(),
        measured_process: campaign.measured_process.clone(),
        gold_process: campaign.gold_process.clone(),
        sampling: campaign.sampling.to_string(),
        n_scored: cases.len(),
        unit,
        needs_review: campaign.needs_review
            || examiners
                .iter()
                .any(|e| e.gate.as_ref().is_some_and(|g| !g.passed())),
        examiners,
        comparison,
    })
}

/// Plain-text rendering of a campaign report.
pub fn render_report(r: &CampaignReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "campaign {}", r.campaign_id);
    let _ = writeln!(
        s,
        "measured process {} against gold process {}, sampling {}",
        r.measured_process, r.gold_process, r.sampling
    );
    if r.needs_review {
        let _ = writeln!(s, "*** NEEDS REVIEW: decision gate failed ***");
    }
    let Some(unit) = &r.unit else {
        let _ = writeln!(s, "no scored cases; report is empty");
        return s;
    };
    let _ = writeln!(s, "scored cases: {}", r.n_scored);
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "{:<16} {:>5} {:>9} {:>7} {:>9} {:>8} {:>8} {:>6} {:>6}  gate",
        "examiner", "cases", "precision", "recall", "f_measure", "fp_error", "fn_error", "dec_fp", "dec_fn"
    );
    let row = |s: &mut String, name: &str, a: &AggregateMetrics, d: Option<&DecisionErrorRates>, g: Option<&GateOutcome>| {
        let (dfp, dfn) = d.map_or(("-".to_string(), "-".to_string()), |d| {
            (fmt2(d.decision_fp_rate), fmt2(d.decision_fn_rate))
        });
        let gate = match g {
            Some(GateOutcome::Pass) => "pass",
            Some(GateOutcome::Fail(_)) => "FAIL",
            None => "-",
        };
        let _ = writeln!(
            s,
            "{:<16} {:>5} {:>9} {:>7} {:>9} {:>8} {:>8} {:>6} {:>6}  {}",
            name,
            a.n_cases,
            fmt_metric(a.mean_precision),
            fmt_metric(a.mean_recall),
            fmt_metric(a.mean_f),
            fmt_metric(a.mean_fp_error),
            fmt_metric(a.mean_fn_error),
            dfp,
            dfn,
            gate
        );
    };
    for e in &r.examiners {
        row(&mut s, &e.examiner_id, &e.aggregate, e.decisions.as_ref(), e.gate.as_ref());
    }
    row(&mut s, "unit", unit, None, None);
    for e in &r.examiners {
        if let Some(GateOutcome::Fail(reason)) = &e.gate {
            let _ = writeln!(s, "gate failure: {reason}");
        }
    }
    if let Some((base, cmp)) = &r.comparison {
        let _ = writeln!(s);
        let _ = writeln!(s, "comparison against {base} (this minus baseline)");
        for (name, d) in [
            ("precision", cmp.precision),
            ("recall", cmp.recall),
            ("f_measure", cmp.f_measure),
            ("fp_error", cmp.fp_error),
            ("fn_error", cmp.fn_error),
        ] {
            let v = d.value().map_or_else(|| "incomparable".to_string(), fmt2_signed);
            let _ = writeln!(s, "  delta {name:<10} {v}");
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum GroupBy {
    Examiner,
    Process,
    Case,
    All,
}

impl FromStr for GroupBy {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "examiner" => Ok(GroupBy::Examiner),
            "process" => Ok(GroupBy::Process),
            "case" => Ok(GroupBy::Case),
            "all" => Ok(GroupBy::All),
            other => Err(ReportError::UnknownGroupBy(other.to_string())),
        }
    }
}

impl GroupBy {
    pub fn key(self, c: &ScoredCase) -> String {
        match self {
            GroupBy::Examiner => c.examiner_id.clone(),
            GroupBy::Process => c.process_id.clone(),
            GroupBy::Case => c.case_id.clone(),
            GroupBy::All => "all".to_string(),
        }
    }
}

/// A trend for one group, with the scored cases behind it in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupTrend {
    pub group: String,
    pub cases: Vec<ScoredCase>,
    pub series: TrendSeries,
    pub average: AggregateMetrics,
}

/// Splits scored cases by `group_by` and builds one trend per group.
pub fn group_trends(
    cases: &[ScoredCase],
    group_by: GroupBy,
    config: &TrendConfig,
) -> Result<Vec<GroupTrend>, ReportError> {
    let mut groups: BTreeMap<String, Vec<ScoredCase>> = BTreeMap::new();
    for c in cases {
        groups.entry(group_by.key(c)).or_default().push(c.clone());
    }
    let mut out = Vec::new();
    for (group, mut list) in groups {
        list.sort_by_key(|c| c.timestamp);
        let series = trend_series(list.iter().map(|c| (c.timestamp, c.metrics)).collect(), config)?;
        let metrics: Vec<_> = list.iter().map(|c| c.metrics).collect();
        let average = macro_average(&metrics, AggregationPolicy::default())
            .expect("non-empty group");
        out.push(GroupTrend {
            group,
            cases: list,
            series,
            average,
        });
    }
    Ok(out)
}
