//! `fah`: score examinations against a gold standard, track trends, plan
//! measurement samples and reproduce the published case-study tables.

#![allow(clippy::result_large_err)]

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fah_core::manifest::parse_manifest;
use fah_core::plot::line_chart_svg;
use fah_core::render::{fmt_accuracy, fmt_metric, full_precision};
use fah_core::report::{campaign_report, group_trends, render_report, GroupBy};
use fah_core::scoring::{score_store, CaseFilter, ScoreError, ScoredCase};
use fah_core::store::{AppendOutcome, CaseStore};
use fah_core::verify::{bundled_fixtures_dir, render_verification, verify_fixtures, CellStatus};
use fah_core::workflow::{MeasurementCampaign, SamplingPlan, StepStatus, TrendConfig};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "fah", version, about = "Forensic analysis accuracy measurement against a gold standard")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Format {
    #[default]
    Table,
    Csv,
}

#[derive(Args)]
struct Output {
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Write output to this file instead of standard output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate manifests and append them to a store
    Ingest {
        #[arg(long)]
        store: PathBuf,
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// Score candidates against gold records, one row per examination
    Score {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        exhibit: Option<String>,
        #[arg(long)]
        process: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Accuracy over time per group, with CSV and SVG plot data
    Trend {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        case: Option<String>,
        #[arg(long)]
        process: Option<String>,
        /// examiner, process, case or all
        #[arg(long, default_value = "examiner")]
        group_by: String,
        #[arg(long, default_value_t = 4)]
        window: usize,
        /// Fractional drop of F below the trailing mean that raises an alert
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
        #[arg(long, default_value_t = 0.5)]
        recall_floor: f64,
        /// Directory for per-group CSV and SVG files
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// List upcoming case ordinals that receive full measurement
    SamplePlan {
        #[arg(long)]
        interval: u64,
        #[arg(long, default_value_t = 0)]
        phase: u64,
        /// Draw the phase uniformly at random instead
        #[arg(long, conflicts_with = "phase")]
        random_phase: bool,
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// List ordinals after this one
        #[arg(long, default_value_t = 0)]
        after: u64,
    },
    /// Recompute the published tables from bundled fixtures
    VerifyPaper {
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[command(flatten)]
        output: Output,
    },
    /// Consolidated per-examiner report for a campaign
    Report {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        campaign: String,
        /// Campaign to compare against
        #[arg(long)]
        baseline: Option<String>,
        #[command(flatten)]
        output: Output,
    },
    /// Create, advance or show a measurement campaign
    Campaign {
        #[command(subcommand)]
        action: CampaignAction,
    },
}

#[derive(Subcommand)]
enum CampaignAction {
    New {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        measured: String,
        #[arg(long)]
        gold: String,
        /// Measure every N-th case; omit to measure every case
        #[arg(long)]
        interval: Option<u64>,
        #[arg(long, default_value_t = 0)]
        phase: u64,
        #[arg(long, conflicts_with = "phase")]
        random_phase: bool,
    },
    Advance {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        step: usize,
        #[arg(long)]
        evidence: String,
    },
    Show {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        id: String,
    },
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
    Diverged,
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Diverged) => ExitCode::from(EXIT_DIVERGED),
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn open_store(path: &Path) -> Result<CaseStore> {
    CaseStore::open(path).with_context(|| format!("opening store {}", path.display()))
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Ingest { store, manifests } => cmd_ingest(&store, &manifests)?,
        Command::Score {
            store,
            case,
            exhibit,
            process,
            output,
        } => {
            let filter = CaseFilter {
                case_id: case,
                exhibit_id: exhibit,
                process_id: process,
                gold_process_id: None,
            };
            cmd_score(&store, &filter, &output)?
        }
        Command::Trend {
            store,
            case,
            process,
            group_by,
            window,
            threshold,
            recall_floor,
            out,
        } => {
            let group_by: GroupBy = group_by.parse().map_err(|e| Failure::Usage(format!("{e}")))?;
            if window == 0 {
                return Err(Failure::Usage("--window must be at least 1".into()));
            }
            if !(0.0..1.0).contains(&threshold) {
                return Err(Failure::Usage("--threshold must lie in [0, 1)".into()));
            }
            let filter = CaseFilter {
                case_id: case,
                process_id: process,
                ..CaseFilter::default()
            };
            let config = TrendConfig {
                window,
                drop_threshold: threshold,
                recall_floor,
            };
            cmd_trend(&store, &filter, group_by, &config, &out)?
        }
        Command::SamplePlan {
            interval,
            phase,
            random_phase,
            count,
            after,
        } => {
            let plan = if random_phase {
                SamplingPlan::random_phase(interval, &mut rand::thread_rng())
            } else {
                SamplingPlan::interval(interval, phase)
            }
            .map_err(|e| Failure::Usage(e.to_string()))?;
            let mut s = format!("sampling plan: {plan}\n");
            for o in plan.upcoming(after, count) {
                s.push_str(&format!("{o}\n"));
            }
            emit(None, &s)?;
        }
        Command::VerifyPaper { fixtures, output } => {
            let dir = fixtures.unwrap_or_else(bundled_fixtures_dir);
            return cmd_verify(&dir, &output);
        }
        Command::Report {
            store,
            campaign,
            baseline,
            output,
        } => cmd_report(&store, &campaign, baseline.as_deref(), &output)?,
        Command::Campaign { action } => cmd_campaign(action)?,
    }
    Ok(())
}

fn cmd_ingest(store: &Path, manifests: &[PathBuf]) -> Result<()> {
    let mut s = CaseStore::open_or_create(store)
        .with_context(|| format!("opening store {}", store.display()))?;
    let (mut added, mut unchanged) = (0, 0);
    for path in manifests {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let record = parse_manifest(&bytes).with_context(|| format!("{}", path.display()))?;
        match s.append(record).with_context(|| format!("{}", path.display()))? {
            AppendOutcome::Appended => added += 1,
            AppendOutcome::Unchanged => unchanged += 1,
        }
    }
    println!("ingested {added} record(s), {unchanged} already present");
    Ok(())
}

fn scored(store: &Path, filter: &CaseFilter) -> Result<Vec<ScoredCase>> {
    let s = open_store(store)?;
    score_store(&s, filter).map_err(|e| match e {
        ScoreError::NotReady(list) => {
            let names: Vec<String> = list.iter().map(|(c, e)| format!("{c}/{e}")).collect();
            anyhow!("missing gold record for: {}", names.join(", "))
        }
        other => anyhow!(other),
    })
}

fn cmd_score(store: &Path, filter: &CaseFilter, output: &Output) -> Result<()> {
    let cases = scored(store, filter)?;
    if cases.is_empty() {
        eprintln!("no cases match the filter");
        return Ok(());
    }
    let text = match output.format {
        Format::Table => {
            let mut s = format!(
                "{:<8} {:<12} {:<16} {:<22} {:>9} {:>7} {:>9} {:>8} {:>8}\n",
                "case", "exhibit", "examiner", "process", "precision", "recall", "f_measure", "fp_error", "fn_error"
            );
            for c in &cases {
                let m = &c.metrics;
                s.push_str(&format!(
                    "{:<8} {:<12} {:<16} {:<22} {:>9} {:>7} {:>9} {:>8} {:>8}\n",
                    c.case_id,
                    c.exhibit_id,
                    c.examiner_id,
                    c.process_id,
                    fmt_accuracy(m, m.precision),
                    fmt_accuracy(m, m.recall),
                    fmt_accuracy(m, m.f_measure),
                    fmt_metric(m.fp_error),
                    fmt_metric(m.fn_error),
                ));
            }
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "case_id", "exhibit_id", "examiner_id", "process_id", "timestamp", "tp", "fp", "fn",
                "retrieved", "relevant", "precision", "recall", "f_measure", "fp_error", "fn_error",
            ])?;
            for c in &cases {
                let m = &c.metrics;
                let t = m.tally;
                w.write_record([
                    c.case_id.clone(),
                    c.exhibit_id.clone(),
                    c.examiner_id.clone(),
                    c.process_id.clone(),
                    c.timestamp_text.clone(),
                    t.true_positives().to_string(),
                    t.false_positives().to_string(),
                    t.false_negatives().to_string(),
                    t.retrieved().to_string(),
                    t.relevant().to_string(),
                    full_precision(m.precision),
                    full_precision(m.recall),
                    full_precision(m.f_measure),
                    full_precision(m.fp_error),
                    full_precision(m.fn_error),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    emit(output.out.as_deref(), &text)
}

fn file_stem_for(group: &str) -> String {
    group
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn cmd_trend(
    store: &Path,
    filter: &CaseFilter,
    group_by: GroupBy,
    config: &TrendConfig,
    out_dir: &Path,
) -> Result<()> {
    let cases = scored(store, filter)?;
    if cases.is_empty() {
        bail!("no scored cases to trend");
    }
    let trends = group_trends(&cases, group_by, config)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut text = String::new();
    for t in &trends {
        let stem = format!("trend-{}", file_stem_for(&t.group));

        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["timestamp", "case_id", "exhibit_id", "precision", "recall", "f_measure", "trailing_mean_f"])?;
        for (c, p) in t.cases.iter().zip(&t.series.points) {
            w.write_record([
                c.timestamp_text.clone(),
                c.case_id.clone(),
                c.exhibit_id.clone(),
                full_precision(c.metrics.precision),
                full_precision(c.metrics.recall),
                full_precision(c.metrics.f_measure),
                full_precision(p.trailing_mean_f),
            ])?;
        }
        w.write_record([
            "average".to_string(),
            String::new(),
            String::new(),
            full_precision(t.average.mean_precision),
            full_precision(t.average.mean_recall),
            full_precision(t.average.mean_f),
            String::new(),
        ])?;
        let csv_path = out_dir.join(format!("{stem}.csv"));
        fs::write(&csv_path, w.into_inner()?).with_context(|| format!("writing {}", csv_path.display()))?;

        let points: Vec<(String, Option<f64>)> = t
            .cases
            .iter()
            .map(|c| (c.timestamp.format("%Y-%m-%d").to_string(), c.metrics.f_measure.value()))
            .collect();
        let svg = line_chart_svg(&format!("F-measure over time: {}", t.group), "F-measure", &points);
        let svg_path = out_dir.join(format!("{stem}.svg"));
        fs::write(&svg_path, svg).with_context(|| format!("writing {}", svg_path.display()))?;

        text.push_str(&format!("group {} ({} points, window {})\n", t.group, t.cases.len(), t.series.window));
        text.push_str(&format!("{:<26} {:>9} {:>7} {:>9}\n", "timestamp", "precision", "recall", "f_measure"));
        for c in &t.cases {
            let m = &c.metrics;
            text.push_str(&format!(
                "{:<26} {:>9} {:>7} {:>9}\n",
                c.timestamp_text,
                fmt_accuracy(m, m.precision),
                fmt_accuracy(m, m.recall),
                fmt_accuracy(m, m.f_measure)
            ));
        }
        text.push_str(&format!(
            "{:<26} {:>9} {:>7} {:>9}\n",
            "average",
            fmt_metric(t.average.mean_precision),
            fmt_metric(t.average.mean_recall),
            fmt_metric(t.average.mean_f)
        ));
        for a in &t.series.alerts {
            text.push_str(&format!(
                "ALERT {} {} at {} ({}): {}\n",
                t.group, a.kind, a.index, t.cases[a.index].timestamp_text, a.detail
            ));
        }
        text.push_str(&format!("wrote {} and {}\n\n", csv_path.display(), svg_path.display()));
    }
    emit(None, &text)
}

fn cmd_verify(dir: &Path, output: &Output) -> Result<(), Failure> {
    let v = verify_fixtures(dir)
        .with_context(|| format!("verifying fixtures in {}", dir.display()))?;
    let text = match output.format {
        Format::Table => render_verification(&v),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(["location", "paper_value", "derived_value", "status", "explanation"])
                .map_err(anyhow::Error::from)?;
            for c in &v.cells {
                let (status, why) = match &c.status {
                    CellStatus::Match => ("match", ""),
                    CellStatus::KnownErratum { explanation } => ("erratum", explanation.as_str()),
                    CellStatus::Unexpected => ("unexpected", ""),
                };
                w.write_record([c.location.as_str(), &c.paper_value, &c.derived_value, status, why])
                    .map_err(anyhow::Error::from)?;
            }
            String::from_utf8(w.into_inner().map_err(|e| anyhow!("{e}"))?).map_err(anyhow::Error::from)?
        }
    };
    emit(output.out.as_deref(), &text)?;
    if v.is_clean() {
        Ok(())
    } else {
        Err(Failure::Diverged)
    }
}

fn cmd_report(store: &Path, campaign: &str, baseline: Option<&str>, output: &Output) -> Result<()> {
    let s = open_store(store)?;
    let mut c = s.load_campaign(campaign)?;
    let b = baseline.map(|id| s.load_campaign(id)).transpose()?;
    let r = campaign_report(&s, &c, b.as_ref())?;
    if r.needs_review && !c.needs_review {
        c.needs_review = true;
        s.save_campaign(&c)?;
    }
    let text = match output.format {
        Format::Table => render_report(&r),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "campaign_id", "examiner_id", "n_cases", "mean_precision", "mean_recall", "mean_f",
                "mean_fp_error", "mean_fn_error", "decision_fp_rate", "decision_fn_rate", "gate",
            ])?;
            let mut rows: Vec<_> = r
                .examiners
                .iter()
                .map(|e| (e.examiner_id.as_str(), &e.aggregate, e.decisions.as_ref(), e.gate.as_ref()))
                .collect();
            if let Some(u) = &r.unit {
                rows.push(("unit", u, None, None));
            }
            for (name, a, d, g) in rows {
                w.write_record([
                    r.campaign_id.clone(),
                    name.to_string(),
                    a.n_cases.to_string(),
                    full_precision(a.mean_precision),
                    full_precision(a.mean_recall),
                    full_precision(a.mean_f),
                    full_precision(a.mean_fp_error),
                    full_precision(a.mean_fn_error),
                    d.map_or(String::new(), |d| d.decision_fp_rate.to_string()),
                    d.map_or(String::new(), |d| d.decision_fn_rate.to_string()),
                    g.map_or(String::new(), |g| if g.passed() { "pass".into() } else { "fail".into() }),
                ])?;
            }
            String::from_utf8(w.into_inner()?)?
        }
    };
    emit(output.out.as_deref(), &text)
}

fn cmd_campaign(action: CampaignAction) -> Result<(), Failure> {
    match action {
        CampaignAction::New {
            store,
            id,
            measured,
            gold,
            interval,
            phase,
            random_phase,
        } => {
            let sampling = match interval {
                None => SamplingPlan::Full,
                Some(n) if random_phase => SamplingPlan::random_phase(n, &mut rand::thread_rng())
                    .map_err(|e| Failure::Usage(e.to_string()))?,
                Some(n) => SamplingPlan::interval(n, phase).map_err(|e| Failure::Usage(e.to_string()))?,
            };
            let s = CaseStore::open_or_create(&store).map_err(anyhow::Error::from)?;
            if s.load_campaign(&id).is_ok() {
                return Err(Failure::Data(anyhow!("campaign {id:?} already exists")));
            }
            let c = MeasurementCampaign::new(id, measured, gold, sampling);
            s.save_campaign(&c).map_err(anyhow::Error::from)?;
            println!("created campaign {} ({})", c.campaign_id, c.sampling);
        }
        CampaignAction::Advance {
            store,
            id,
            step,
            evidence,
        } => {
            let s = open_store(&store)?;
            let mut c = s.load_campaign(&id).map_err(anyhow::Error::from)?;
            c.advance(step, evidence).map_err(anyhow::Error::from)?;
            s.save_campaign(&c).map_err(anyhow::Error::from)?;
            println!("campaign {id}: step {step} done");
        }
        CampaignAction::Show { store, id } => {
            let s = open_store(&store)?;
            let c = s.load_campaign(&id).map_err(anyhow::Error::from)?;
            let mut text = format!(
                "campaign {}: {} measured against {}, sampling {}\n",
                c.campaign_id, c.measured_process, c.gold_process, c.sampling
            );
            for e in &c.steps {
                let status = match &e.status {
                    StepStatus::Pending => "pending".to_string(),
                    StepStatus::Done { evidence } => format!("done: {evidence}"),
                };
                text.push_str(&format!("  {}. {:<48} {status}\n", e.step.number(), e.step.description()));
            }
            if c.needs_review {
                text.push_str("  NEEDS REVIEW\n");
            }
            emit(None, &text)?;
        }
    }
    Ok(())
}
