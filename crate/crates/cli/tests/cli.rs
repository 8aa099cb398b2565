use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fah(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fah")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn fixtures() -> PathBuf {
    fah_core::verify::bundled_fixtures_dir()
}

fn fixture_store() -> String {
    fixtures().join("store").display().to_string()
}

fn copy_dir(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for e in fs::read_dir(from).unwrap() {
        let e = e.unwrap();
        let dest = to.join(e.file_name());
        if e.file_type().unwrap().is_dir() {
            copy_dir(&e.path(), &dest);
        } else {
            fs::copy(e.path(), dest).unwrap();
        }
    }
}

fn write_manifest(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

fn tally_manifest(exhibit: &str, examiner: &str, process: &str, role: &str, decision: &str, retrieved: u64, fp: u64) -> String {
    format!(
        r#"{{"schema":"fah/1","case_id":"s","exhibit_id":"{exhibit}","examiner_id":"{examiner}","process_id":"{process}","role":"{role}","decision":"{decision}","timestamp":"2024-03-0{}T08:00:00+01:00","mode":"tally","declared_tally":{{"retrieved":{retrieved},"false_positives":{fp}}}}}"#,
        if role == "gold" { 2 } else { 1 }
    )
}

#[test]
fn score_case1_table_rows() {
    let o = fah(&["score", "--store", &fixture_store(), "--case", "case1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let row = out.lines().find(|l| l.contains("exam-1")).unwrap();
    let cols: Vec<_> = row.split_whitespace().collect();
    assert_eq!(&cols[4..7], ["0.67", "0.33", "0.44"]);
    assert_eq!(out.lines().count(), 6);
}

#[test]
fn score_media3_is_not_applicable() {
    let o = fah(&["score", "--store", &fixture_store(), "--case", "case2", "--exhibit", "media-3"]);
    for row in stdout(&o).lines().skip(1) {
        let cols: Vec<_> = row.split_whitespace().collect();
        assert_eq!(&cols[4..7], ["n/a", "n/a", "n/a"], "{row}");
    }
}

#[test]
fn score_csv_keeps_full_precision() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.csv");
    let o = fah(&["score", "--store", &fixture_store(), "--case", "table1", "--format", "csv", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = fs::read_to_string(out).unwrap();
    assert!(text.starts_with("case_id,exhibit_id,examiner_id"));
    assert!(text.contains("0.7142857142857143"));
}

#[test]
fn empty_filter_is_a_notice() {
    let o = fah(&["score", "--store", &fixture_store(), "--case", "nothing-here"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("no cases"));
}

#[test]
fn missing_gold_lists_exhibits() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "c.json", &tally_manifest("x1", "e", "p", "candidate", "further_analysis_yes", 3, 1));
    let store = dir.path().join("store");
    let store = store.to_str().unwrap();
    assert_eq!(fah(&["ingest", "--store", store, &m]).status.code(), Some(0));
    let o = fah(&["score", "--store", store]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("s/x1"), "{}", stderr(&o));
}

#[test]
fn invalid_manifest_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_manifest(dir.path(), "bad.json", &tally_manifest("x1", "e", "p", "candidate", "further_analysis_yes", 1, 3));
    let o = fah(&["ingest", "--store", dir.path().join("s").to_str().unwrap(), &m]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("false_positives"), "{}", stderr(&o));
}

#[test]
fn repeated_runs_are_byte_identical() {
    let store = fixture_store();
    for args in [
        vec!["score", "--store", &store],
        vec!["score", "--store", &store, "--format", "csv"],
        vec!["report", "--store", &store, "--campaign", "case2-preliminary", "--baseline", "case1-triage"],
        vec!["verify-paper"],
    ] {
        let a = fah(&args);
        let b = fah(&args);
        assert_eq!(a.stdout, b.stdout, "{args:?}");
        assert!(!a.stdout.is_empty());
    }
}

#[test]
fn trend_writes_csv_and_svg() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = fah(&["trend", "--store", &fixture_store(), "--case", "table1", "--group-by", "examiner", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert_eq!(text.matches("f_drop").count(), 1);
    let csv = fs::read_to_string(dir.path().join("trend-investigator-a.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[5].starts_with("average,"));
    let svg = fs::read_to_string(dir.path().join("trend-investigator-a.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 4);
}

#[test]
fn trend_single_point() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = fah(&[
        "trend", "--store", &fixture_store(), "--case", "case2", "--process", "preliminary-analysis",
        "--group-by", "case", "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));

    let dir2 = tempfile::tempdir().unwrap();
    let m1 = write_manifest(dir2.path(), "g.json", &tally_manifest("x1", "gold", "full", "gold", "further_analysis_yes", 4, 0));
    let m2 = write_manifest(dir2.path(), "c.json", &tally_manifest("x1", "e", "p", "candidate", "further_analysis_yes", 3, 1));
    let store = dir2.path().join("store");
    fah(&["ingest", "--store", store.to_str().unwrap(), &m1, &m2]);
    let o = fah(&["trend", "--store", store.to_str().unwrap(), "--out", dir2.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(!stdout(&o).contains("ALERT"));
    let svg = fs::read_to_string(dir2.path().join("trend-e.svg")).unwrap();
    assert_eq!(svg.matches("<circle").count(), 1);
}

#[test]
fn unknown_group_by_is_usage_error() {
    let o = fah(&["trend", "--store", &fixture_store(), "--group-by", "lab"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sample_plan_schedules() {
    let list = |args: &[&str]| -> Vec<String> {
        let o = fah(args);
        assert_eq!(o.status.code(), Some(0));
        stdout(&o).lines().skip(1).map(String::from).collect()
    };
    assert_eq!(list(&["sample-plan", "--interval", "10", "--count", "3"]), ["10", "20", "30"]);
    assert_eq!(list(&["sample-plan", "--interval", "1", "--count", "3"]), ["1", "2", "3"]);
    assert_eq!(list(&["sample-plan", "--interval", "10", "--phase", "3", "--count", "3"]), ["3", "13", "23"]);
    assert_eq!(list(&["sample-plan", "--interval", "10", "--random-phase", "--count", "2"]).len(), 2);
    assert_eq!(fah(&["sample-plan", "--interval", "0"]).status.code(), Some(1));
}

#[test]
fn usage_and_help_exit_codes() {
    assert_eq!(fah(&[]).status.code(), Some(1));
    assert_eq!(fah(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fah(&["score"]).status.code(), Some(1));
    assert_eq!(fah(&["--help"]).status.code(), Some(0));
    assert_eq!(fah(&["--version"]).status.code(), Some(0));
}

#[test]
fn verify_paper_passes_on_pristine_fixtures() {
    let o = fah(&["verify-paper"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verification PASSED"));
    let csv = fah(&["verify-paper", "--format", "csv"]);
    assert!(stdout(&csv).contains("appendix-a/exam-4/f_measure,0.12,0.13,erratum,"));
}

#[test]
fn verify_paper_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    copy_dir(&fixtures(), dir.path());
    let path = dir.path().to_str().unwrap();

    // dropping an erratum exposes an unexpected divergence
    let errata = dir.path().join("errata.json");
    let original = fs::read_to_string(&errata).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&original).unwrap();
    v["entries"].as_array_mut().unwrap().remove(0);
    fs::write(&errata, v.to_string()).unwrap();
    assert_eq!(fah(&["verify-paper", "--fixtures", path]).status.code(), Some(3));

    // an erratum for a cell that now matches is also a failure
    fs::write(&errata, &original).unwrap();
    let published = dir.path().join("published.json");
    let text = fs::read_to_string(&published).unwrap();
    let patched = text.replacen(
        r#""location": "appendix-a/exam-4/f_measure",
      "value": "0.12""#,
        r#""location": "appendix-a/exam-4/f_measure",
      "value": "0.13""#,
        1,
    );
    assert_ne!(patched, text, "fixture layout changed");
    fs::write(&published, patched).unwrap();
    let o = fah(&["verify-paper", "--fixtures", path]);
    assert_eq!(o.status.code(), Some(3));

    fs::remove_file(&published).unwrap();
    assert_eq!(fah(&["verify-paper", "--fixtures", path]).status.code(), Some(2));
}

#[test]
fn report_comparison_and_errors() {
    let store = fixture_store();
    let o = fah(&["report", "--store", &store, "--campaign", "case2-preliminary", "--baseline", "case1-triage"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.trim() == "delta f_measure  +0.24"), "{out}");
    assert!(!out.contains("NEEDS REVIEW"));

    let csv = fah(&["report", "--store", &store, "--campaign", "case2-preliminary", "--format", "csv"]);
    assert!(stdout(&csv).lines().any(|l| l.starts_with("case2-preliminary,examiner-1,5,")));

    assert_eq!(fah(&["report", "--store", &store, "--campaign", "nope"]).status.code(), Some(2));
}

#[test]
fn campaign_lifecycle_and_gate_failure() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path().join("store");
    let s = store.to_str().unwrap();
    let g = write_manifest(dir.path(), "g.json", &tally_manifest("x1", "gold", "full", "gold", "further_analysis_yes", 4, 0));
    // the candidate screens out an exhibit that holds relevant material
    let c = write_manifest(dir.path(), "c.json", &tally_manifest("x1", "e", "quick", "candidate", "further_analysis_no", 0, 0));
    assert_eq!(fah(&["ingest", "--store", s, &g, &c]).status.code(), Some(0));
    // re-ingesting identical records is a no-op
    assert!(stdout(&fah(&["ingest", "--store", s, &g])).contains("1 already present"));

    assert_eq!(
        fah(&["campaign", "new", "--store", s, "--id", "q", "--measured", "quick", "--gold", "full", "--interval", "10"]).status.code(),
        Some(0)
    );
    // scoring is refused until steps 1-5 are done
    assert_eq!(fah(&["report", "--store", s, "--campaign", "q"]).status.code(), Some(2));
    assert_eq!(
        fah(&["campaign", "advance", "--store", s, "--id", "q", "--step", "2", "--evidence", "x"]).status.code(),
        Some(2)
    );
    for step in 1..=5 {
        let step = step.to_string();
        let o = fah(&["campaign", "advance", "--store", s, "--id", "q", "--step", &step, "--evidence", "done"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let o = fah(&["report", "--store", s, "--campaign", "q"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("NEEDS REVIEW"));
    assert!(stdout(&fah(&["campaign", "show", "--store", s, "--id", "q"])).contains("NEEDS REVIEW"));

    // a campaign whose measured process has no records yet
    fah(&["campaign", "new", "--store", s, "--id", "empty", "--measured", "other", "--gold", "full"]);
    for step in 1..=5 {
        let step = step.to_string();
        fah(&["campaign", "advance", "--store", s, "--id", "empty", "--step", &step, "--evidence", "done"]);
    }
    let o = fah(&["report", "--store", s, "--campaign", "empty"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("no scored cases"));
}
