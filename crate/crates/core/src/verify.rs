//! Reproduction of the published case-study tables from bundled fixtures.
//!
//! The fixture directory holds a case store with the raw counts, a list of
//! published cell values (`published.json`) and a curated errata list
//! (`errata.json`). Every published cell is recomputed from the raw counts
//! and compared at two decimals. A run is clean when the set of divergent
//! cells equals the errata list exactly.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{
    decision_confusion, macro_average, AggregateMetrics, AggregationPolicy, CaseMetrics,
    MetricsError,
};
use crate::model::MetricValue;
use crate::render::{fmt2, hundredths, NOT_APPLICABLE};
use crate::scoring::{score_store, CaseFilter, ScoreError, ScoredCase};
use crate::store::{CaseStore, StoreError};

pub const PUBLISHED_SCHEMA: &str = "fah-published/1";
pub const ERRATA_SCHEMA: &str = "fah-errata/1";

/// Case ids used by the bundled fixtures.
pub const FICTIONAL_SERIES_CASE: &str = "table1";
pub const TRIAGE_CASE: &str = "case1";
pub const PRELIMINARY_CASE: &str = "case2";

/// Directory of the fixtures shipped with this crate.
pub fn bundled_fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("fixture file {path}: {message}")]
    Fixture { path: PathBuf, message: String },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Score(#[from] ScoreError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("fixture case {0:?} has no scored records")]
    EmptyCase(String),
    #[error("unexpected fixture id {0:?}")]
    UnexpectedId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedCell {
    pub location: String,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishedFile {
    pub schema: String,
    pub cells: Vec<PublishedCell>,
}

/// A printed value that the printed raw counts do not reproduce.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrataEntry {
    pub location: String,
    pub paper_value: String,
    pub derived_value: String,
    pub explanation: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrataFile {
    pub schema: String,
    pub entries: Vec<ErrataEntry>,
}

/// A recomputed cell value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Derived {
    Ratio(f64),
    Count(u64),
    NotApplicable,
}

impl fmt::Display for Derived {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Derived::Ratio(v) => f.write_str(&fmt2(*v)),
            Derived::Count(n) => write!(f, "{n}"),
            Derived::NotApplicable => f.write_str(NOT_APPLICABLE),
        }
    }
}

impl Derived {
    /// Whether a printed value agrees with this one at two decimals.
    /// `None` when the printed text is not a number or "n/a".
    pub fn agrees_with(&self, printed: &str) -> Option<bool> {
        let printed = printed.trim();
        if printed.eq_ignore_ascii_case(NOT_APPLICABLE) {
            return Some(matches!(self, Derived::NotApplicable));
        }
        let p: f64 = printed.parse().ok()?;
        Some(match self {
            Derived::Ratio(v) => hundredths(*v) == hundredths(p),
            Derived::Count(n) => p.fract() == 0.0 && p == *n as f64,
            Derived::NotApplicable => false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Match,
    KnownErratum { explanation: String },
    /// Divergence not covered by the errata list, or covered by an entry
    /// whose derived value no longer holds.
    Unexpected,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CellCheck {
    pub location: String,
    pub paper_value: String,
    pub derived_value: String,
    pub status: CellStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Verification {
    pub cells: Vec<CellCheck>,
    /// Errata entries whose cell now matches.
    pub resolved_errata: Vec<ErrataEntry>,
    /// Errata entries naming no published cell.
    pub stale_errata: Vec<ErrataEntry>,
    /// Published cells the fixtures cannot recompute.
    pub missing: Vec<String>,
    /// Recomputed cells with no published counterpart.
    pub unpublished: Vec<String>,
    /// Published cells whose text is not a number or "n/a".
    pub unparseable: Vec<String>,
}

impl Verification {
    pub fn is_clean(&self) -> bool {
        self.resolved_errata.is_empty()
            && self.stale_errata.is_empty()
            && self.missing.is_empty()
            && self.unpublished.is_empty()
            && self.unparseable.is_empty()
            && self
                .cells
                .iter()
                .all(|c| c.status != CellStatus::Unexpected)
    }

    /// Cells whose printed and derived values differ.
    pub fn divergences(&self) -> impl Iterator<Item = &CellCheck> {
        self.cells.iter().filter(|c| c.status != CellStatus::Match)
    }

    pub fn cell(&self, location: &str) -> Option<&CellCheck> {
        self.cells.iter().find(|c| c.location == location)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let mut m = (0, 0, 0);
        for c in &self.cells {
            match c.status {
                CellStatus::Match => m.0 += 1,
                CellStatus::KnownErratum { .. } => m.1 += 1,
                CellStatus::Unexpected => m.2 += 1,
            }
        }
        m
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, VerifyError> {
    let err = |message: String| VerifyError::Fixture {
        path: path.to_path_buf(),
        message,
    };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

pub fn load_published(path: &Path) -> Result<PublishedFile, VerifyError> {
    let f: PublishedFile = read_json(path)?;
    let err = |message: String| VerifyError::Fixture {
        path: path.to_path_buf(),
        message,
    };
    if f.schema != PUBLISHED_SCHEMA {
        return Err(err(format!("unsupported schema {:?}", f.schema)));
    }
    let mut seen = BTreeSet::new();
    for c in &f.cells {
        if !seen.insert(c.location.as_str()) {
            return Err(err(format!("duplicate location {:?}", c.location)));
        }
    }
    Ok(f)
}

pub fn load_errata(path: &Path) -> Result<ErrataFile, VerifyError> {
    let f: ErrataFile = read_json(path)?;
    let err = |message: String| VerifyError::Fixture {
        path: path.to_path_buf(),
        message,
    };
    if f.schema != ERRATA_SCHEMA {
        return Err(err(format!("unsupported schema {:?}", f.schema)));
    }
    let mut seen = BTreeSet::new();
    for e in &f.entries {
        if e.paper_value == e.derived_value {
            return Err(err(format!(
                "erratum {} lists equal paper and derived values",
                e.location
            )));
        }
        if !seen.insert(e.location.as_str()) {
            return Err(err(format!("duplicate erratum {:?}", e.location)));
        }
    }
    Ok(f)
}

type Cells = BTreeMap<String, Derived>;

fn accuracy_cells(cells: &mut Cells, prefix: &str, m: &CaseMetrics) {
    for (name, v) in [
        ("precision", m.precision),
        ("recall", m.recall),
        ("f_measure", m.f_measure),
    ] {
        let d = match v {
            MetricValue::Defined(x) if !m.gold_empty() => Derived::Ratio(x),
            _ => Derived::NotApplicable,
        };
        cells.insert(format!("{prefix}/{name}"), d);
    }
}

fn mean_cells(cells: &mut Cells, prefix: &str, a: &AggregateMetrics) {
    for (name, v) in [
        ("precision", a.mean_precision),
        ("recall", a.mean_recall),
        ("f_measure", a.mean_f),
    ] {
        cells.insert(
            format!("{prefix}/{name}"),
            v.value().map_or(Derived::NotApplicable, Derived::Ratio),
        );
    }
}

fn ordinal(id: &str, prefix: &str) -> Result<String, VerifyError> {
    id.strip_prefix(prefix)
        .filter(|n| n.parse::<u32>().is_ok())
        .map(str::to_string)
        .ok_or_else(|| VerifyError::UnexpectedId(id.to_string()))
}

fn scored(store: &CaseStore, case_id: &str) -> Result<Vec<ScoredCase>, VerifyError> {
    let v = score_store(store, &CaseFilter::case(case_id))?;
    if v.is_empty() {
        return Err(VerifyError::EmptyCase(case_id.to_string()));
    }
    Ok(v)
}

fn average(cases: &[ScoredCase]) -> Result<AggregateMetrics, VerifyError> {
    let m: Vec<_> = cases.iter().map(|c| c.metrics).collect();
    Ok(macro_average(&m, AggregationPolicy::default())?)
}

/// Recomputes every table cell the fixtures support.
pub fn derive_cells(store: &CaseStore) -> Result<BTreeMap<String, Derived>, VerifyError> {
    let mut cells = Cells::new();

    // fictional series
    let series = scored(store, FICTIONAL_SERIES_CASE)?;
    for c in &series {
        let n = ordinal(&c.exhibit_id, "analysis-")?;
        accuracy_cells(&mut cells, &format!("table-1/analysis-{n}"), &c.metrics);
    }
    mean_cells(&mut cells, "table-1/average", &average(&series)?);

    // triage case
    let triage = scored(store, TRIAGE_CASE)?;
    for c in &triage {
        let n = ordinal(&c.exhibit_id, "exam-")?;
        accuracy_cells(&mut cells, &format!("appendix-a/exam-{n}"), &c.metrics);
        accuracy_cells(&mut cells, &format!("table-2/analysis-{n}"), &c.metrics);
    }
    let triage_avg = average(&triage)?;
    mean_cells(&mut cells, "table-2/average", &triage_avg);

    // preliminary examiners
    let prelim = scored(store, PRELIMINARY_CASE)?;
    let mut by_examiner: BTreeMap<String, Vec<ScoredCase>> = BTreeMap::new();
    for c in &prelim {
        let m = ordinal(&c.exhibit_id, "media-")?;
        let k = ordinal(&c.examiner_id, "examiner-")?;
        let prefix = format!("appendix-b/media-{m}/examiner-{k}");
        let t = c.metrics.tally;
        cells.insert(format!("{prefix}/fp"), Derived::Count(t.false_positives()));
        cells.insert(format!("{prefix}/fn"), Derived::Count(t.false_negatives()));
        // the error tables print undefined rates as zero
        cells.insert(
            format!("{prefix}/fp_error"),
            Derived::Ratio(c.metrics.fp_error.or_zero()),
        );
        cells.insert(
            format!("{prefix}/fn_error"),
            Derived::Ratio(c.metrics.fn_error.or_zero()),
        );
        accuracy_cells(&mut cells, &prefix, &c.metrics);
        by_examiner.entry(k).or_default().push(c.clone());
    }
    for (k, list) in &by_examiner {
        let pairs: Vec<_> = list
            .iter()
            .filter_map(|c| c.candidate_decision.map(|d| (c.gold_decision, d)))
            .collect();
        let d = decision_confusion(format!("examiner-{k}"), &pairs)?;
        let p = format!("table-3/examiner-{k}");
        cells.insert(format!("{p}/decision_fp"), Derived::Count(d.decision_fp as u64));
        cells.insert(format!("{p}/decision_fp_rate"), Derived::Ratio(d.decision_fp_rate));
        cells.insert(format!("{p}/decision_fn"), Derived::Count(d.decision_fn as u64));
        cells.insert(format!("{p}/decision_fn_rate"), Derived::Ratio(d.decision_fn_rate));

        let a = average(list)?;
        let ratio = |v: MetricValue| v.value().map_or(Derived::NotApplicable, Derived::Ratio);
        cells.insert(format!("table-4/examiner-{k}/mean_fp_error"), ratio(a.mean_fp_error));
        cells.insert(format!("table-4/examiner-{k}/mean_fn_error"), ratio(a.mean_fn_error));
        cells.insert(format!("table-5/examiner-{k}/mean_f"), ratio(a.mean_f));
    }
    let unit = average(&prelim)?;
    let unit_f = unit.mean_f.value().map_or(Derived::NotApplicable, Derived::Ratio);
    cells.insert("table-5/unit/mean_f".into(), unit_f);

    // cross-process comparison
    cells.insert("comparison/preliminary/mean_f".into(), unit_f);
    cells.insert(
        "comparison/triage/mean_f".into(),
        triage_avg.mean_f.value().map_or(Derived::NotApplicable, Derived::Ratio),
    );
    if let (Some(a), Some(b)) = (unit.mean_f.value(), triage_avg.mean_f.value()) {
        cells.insert("comparison/f_delta".into(), Derived::Ratio(a - b));
    }

    Ok(cells)
}

/// Compares recomputed cells with published ones under an errata list.
pub fn check_cells(derived: &Cells, published: &PublishedFile, errata: &ErrataFile) -> Verification {
    let errata_by_loc: BTreeMap<&str, &ErrataEntry> = errata
        .entries
        .iter()
        .map(|e| (e.location.as_str(), e))
        .collect();
    let published_locs: BTreeSet<&str> = published.cells.iter().map(|c| c.location.as_str()).collect();

    let mut v = Verification::default();
    for cell in &published.cells {
        let Some(d) = derived.get(&cell.location) else {
            v.missing.push(cell.location.clone());
            continue;
        };
        let Some(agrees) = d.agrees_with(&cell.value) else {
            v.unparseable.push(cell.location.clone());
            continue;
        };
        let derived_value = d.to_string();
        let erratum = errata_by_loc.get(cell.location.as_str());
        let status = match (agrees, erratum) {
            (true, None) => CellStatus::Match,
            (true, Some(e)) => {
                v.resolved_errata.push((*e).clone());
                CellStatus::Match
            }
            (false, Some(e)) if e.paper_value == cell.value && e.derived_value == derived_value => {
                CellStatus::KnownErratum {
                    explanation: e.explanation.clone(),
                }
            }
            (false, _) => CellStatus::Unexpected,
        };
        v.cells.push(CellCheck {
            location: cell.location.clone(),
            paper_value: cell.value.clone(),
            derived_value,
            status,
        });
    }
    v.stale_errata = errata
        .entries
        .iter()
        .filter(|e| !published_locs.contains(e.location.as_str()))
        .cloned()
        .collect();
    v.unpublished = derived
        .keys()
        .filter(|k| !published_locs.contains(k.as_str()))
        .cloned()
        .collect();
    v
}

/// Runs the full reproduction from a fixture directory.
pub fn verify_fixtures(dir: &Path) -> Result<Verification, VerifyError> {
    let store = CaseStore::open(dir.join("store"))?;
    let published = load_published(&dir.join("published.json"))?;
    let errata = load_errata(&dir.join("errata.json"))?;
    let derived = derive_cells(&store)?;
    Ok(check_cells(&derived, &published, &errata))
}

/// Line-per-cell text report followed by a summary.
pub fn render_verification(v: &Verification) -> String {
    let mut s = String::new();
    for c in &v.cells {
        let tag = match &c.status {
            CellStatus::Match => "match",
            CellStatus::KnownErratum { .. } => "ERRATUM",
            CellStatus::Unexpected => "UNEXPECTED",
        };
        let _ = write!(
            s,
            "{tag:<10} {:<44} paper={:<5} derived={}",
            c.location, c.paper_value, c.derived_value
        );
        if let CellStatus::KnownErratum { explanation } = &c.status {
            let _ = write!(s, "  ({explanation})");
        }
        s.push('\n');
    }
    for e in &v.resolved_errata {
        let _ = writeln!(s, "RESOLVED   {} erratum no longer diverges", e.location);
    }
    for e in &v.stale_errata {
        let _ = writeln!(s, "STALE      {} erratum names no published cell", e.location);
    }
    for l in &v.missing {
        let _ = writeln!(s, "MISSING    {l} cannot be recomputed from fixtures");
    }
    for l in &v.unpublished {
        let _ = writeln!(s, "UNLISTED   {l} recomputed but not in the published list");
    }
    for l in &v.unparseable {
        let _ = writeln!(s, "BADVALUE   {l} published value is not numeric");
    }
    let (m, k, u) = v.counts();
    let _ = writeln!(
        s,
        "\n{} cells: {m} match, {k} known errata, {u} unexpected; verification {}",
        v.cells.len(),
        if v.is_clean() { "PASSED" } else { "FAILED" }
    );
    s
}
