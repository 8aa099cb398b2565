//! Directory-backed case store.
//!
//! Layout under the root:
//!
//! ```text
//! ledger.jsonl          one record per line, append-only, authoritative
//! records/<key>.json    pretty manifest per record
//! campaigns/<id>.json   campaign state
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::manifest::{parse_manifest, to_ledger_line, to_manifest, ManifestError};
use crate::model::{validate_record, ExaminationRecord, RecordKey, Role, Violation};
use crate::workflow::{MeasurementCampaign, WorkflowError};

const LEDGER: &str = "ledger.jsonl";
const RECORDS: &str = "records";
const CAMPAIGNS: &str = "campaigns";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store root {0} does not exist")]
    Missing(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("ledger line {line}: {source}")]
    Corrupt { line: usize, source: ManifestError },
    #[error("record {key} is invalid: {violations:?}")]
    Invalid {
        key: RecordKey,
        violations: Vec<Violation>,
    },
    #[error("record {0} conflicts with an existing record under the same key")]
    Conflict(RecordKey),
    #[error("exhibit {case_id}/{exhibit_id} already has gold record {existing}")]
    GoldConflict {
        case_id: String,
        exhibit_id: String,
        existing: RecordKey,
    },
    #[error("exhibit {case_id}/{exhibit_id} has no gold record yet; it awaits full examination")]
    NotReady { case_id: String, exhibit_id: String },
    #[error("unknown campaign {0:?}")]
    UnknownCampaign(String),
    #[error("campaign file {path}: {message}")]
    BadCampaign { path: PathBuf, message: String },
}

impl From<WorkflowError> for StoreError {
    fn from(e: WorkflowError) -> Self {
        StoreError::BadCampaign {
            path: PathBuf::new(),
            message: e.to_string(),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AppendOutcome {
    Appended,
    /// An identical record was already present.
    Unchanged,
}

/// Single-writer store of examination records.
#[derive(Debug)]
pub struct CaseStore {
    root: PathBuf,
    records: Vec<ExaminationRecord>,
    index: BTreeMap<RecordKey, usize>,
}

/// Filename for a record key. Each component is percent-encoded outside
/// `[A-Za-z0-9._-]` and components are joined with `+`, so distinct keys
/// always get distinct names.
pub fn record_file_name(key: &RecordKey) -> String {
    fn enc(s: &str, out: &mut String) {
        for b in s.bytes() {
            if b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-') {
                out.push(b as char);
            } else {
                out.push_str(&format!("%{b:02X}"));
            }
        }
    }
    let mut out = String::new();
    let role = key.role.to_string();
    for (i, part) in [
        &key.case_id,
        &key.exhibit_id,
        &key.examiner_id,
        &key.process_id,
        &role,
    ]
    .iter()
    .enumerate()
    {
        if i > 0 {
            out.push('+');
        }
        enc(part, &mut out);
    }
    out.push_str(".json");
    out
}

impl CaseStore {
    /// Opens an existing store, replaying its ledger.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        if !root.is_dir() {
            return Err(StoreError::Missing(root));
        }
        let mut store = Self {
            root,
            records: Vec::new(),
            index: BTreeMap::new(),
        };
        let ledger = store.root.join(LEDGER);
        if ledger.exists() {
            let file = File::open(&ledger).map_err(io_err(&ledger))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(io_err(&ledger))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record = parse_manifest(line.as_bytes())
                    .map_err(|source| StoreError::Corrupt { line: n + 1, source })?;
                store.admit(record)?;
            }
        }
        Ok(store)
    }

    /// Opens the store at `root`, creating an empty one if needed.
    pub fn open_or_create(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref();
        fs::create_dir_all(root).map_err(io_err(root))?;
        Self::open(root)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn records(&self) -> &[ExaminationRecord] {
        &self.records
    }

    pub fn get(&self, key: &RecordKey) -> Option<&ExaminationRecord> {
        self.index.get(key).map(|&i| &self.records[i])
    }

    /// Checks a record against the store. `Ok(false)` means it is already present.
    fn check_new(&self, record: &ExaminationRecord) -> Result<bool, StoreError> {
        let key = record.key();
        let violations = validate_record(record);
        if !violations.is_empty() {
            return Err(StoreError::Invalid { key, violations });
        }
        if let Some(existing) = self.get(&key) {
            return if existing == record {
                Ok(false)
            } else {
                Err(StoreError::Conflict(key))
            };
        }
        if record.role == Role::Gold {
            if let Some(g) = self.gold(&record.case_id, &record.exhibit_id) {
                return Err(StoreError::GoldConflict {
                    case_id: record.case_id.clone(),
                    exhibit_id: record.exhibit_id.clone(),
                    existing: g.key(),
                });
            }
        }
        Ok(true)
    }

    fn admit(&mut self, record: ExaminationRecord) -> Result<bool, StoreError> {
        if !self.check_new(&record)? {
            return Ok(false);
        }
        self.index.insert(record.key(), self.records.len());
        self.records.push(record);
        Ok(true)
    }

    /// Validates and durably appends a record.
    pub fn append(&mut self, record: ExaminationRecord) -> Result<AppendOutcome, StoreError> {
        if !self.check_new(&record)? {
            return Ok(AppendOutcome::Unchanged);
        }

        let dir = self.root.join(RECORDS);
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(record_file_name(&record.key()));
        fs::write(&path, to_manifest(&record)).map_err(io_err(&path))?;

        let ledger = self.root.join(LEDGER);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&ledger)
            .map_err(io_err(&ledger))?;
        writeln!(f, "{}", to_ledger_line(&record)).map_err(io_err(&ledger))?;
        f.sync_all().map_err(io_err(&ledger))?;

        self.admit(record)?;
        Ok(AppendOutcome::Appended)
    }

    pub fn gold(&self, case_id: &str, exhibit_id: &str) -> Option<&ExaminationRecord> {
        self.records
            .iter()
            .find(|r| r.role == Role::Gold && r.case_id == case_id && r.exhibit_id == exhibit_id)
    }

    /// Distinct `(case_id, exhibit_id)` pairs, sorted.
    pub fn exhibits(&self) -> Vec<(String, String)> {
        self.records
            .iter()
            .map(|r| (r.case_id.clone(), r.exhibit_id.clone()))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// The gold record of an exhibit and its candidates, ordered by
    /// timestamp, then examiner, then process.
    pub fn pair_records(
        &self,
        case_id: &str,
        exhibit_id: &str,
    ) -> Result<(&ExaminationRecord, Vec<&ExaminationRecord>), StoreError> {
        let gold = self
            .gold(case_id, exhibit_id)
            .ok_or_else(|| StoreError::NotReady {
                case_id: case_id.to_string(),
                exhibit_id: exhibit_id.to_string(),
            })?;
        let mut candidates: Vec<&ExaminationRecord> = self
            .records
            .iter()
            .filter(|r| {
                r.role == Role::Candidate && r.case_id == case_id && r.exhibit_id == exhibit_id
            })
            .collect();
        candidates.sort_by(|a, b| {
            (a.parsed_timestamp(), &a.examiner_id, &a.process_id).cmp(&(
                b.parsed_timestamp(),
                &b.examiner_id,
                &b.process_id,
            ))
        });
        Ok((gold, candidates))
    }

    fn campaign_path(&self, id: &str) -> PathBuf {
        let name: String = id
            .chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') {
                    c
                } else {
                    '_'
                }
            })
            .collect();
        self.root.join(CAMPAIGNS).join(format!("{name}.json"))
    }

    pub fn load_campaign(&self, id: &str) -> Result<MeasurementCampaign, StoreError> {
        let path = self.campaign_path(id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownCampaign(id.to_string()))
            }
            Err(e) => return Err(io_err(&path)(e)),
        };
        let bad = |message: String| StoreError::BadCampaign {
            path: path.clone(),
            message,
        };
        let campaign: MeasurementCampaign =
            serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        campaign.check().map_err(|e| bad(e.to_string()))?;
        if campaign.campaign_id != id {
            return Err(bad(format!("file holds campaign {:?}", campaign.campaign_id)));
        }
        Ok(campaign)
    }

    pub fn save_campaign(&self, campaign: &MeasurementCampaign) -> Result<(), StoreError> {
        campaign.check()?;
        let path = self.campaign_path(&campaign.campaign_id);
        let dir = path.parent().expect("campaign dir");
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut text = serde_json::to_string_pretty(campaign).expect("campaign serializes");
        text.push('\n');
        fs::write(&path, text).map_err(io_err(&path))
    }

    /// Ids of all stored campaigns, sorted.
    pub fn campaign_ids(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join(CAMPAIGNS);
        if !dir.is_dir() {
            return Ok(Vec::new());
        }
        let mut ids = Vec::new();
        for entry in fs::read_dir(&dir).map_err(io_err(&dir))? {
            let path = entry.map_err(io_err(&dir))?.path();
            if path.extension().is_some_and(|e| e == "json") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DeclaredTally, RecordMode, RECORD_SCHEMA};
    use crate::workflow::SamplingPlan;

    fn rec(exhibit: &str, examiner: &str, role: Role, retrieved: u64, fp: u64, ts: &str) -> ExaminationRecord {
        ExaminationRecord {
            schema: RECORD_SCHEMA.into(),
            case_id: "C1".into(),
            exhibit_id: exhibit.into(),
            examiner_id: examiner.into(),
            process_id: if role == Role::Gold { "full-analysis" } else { "triage-v1" }.into(),
            role,
            decision: None,
            timestamp: ts.into(),
            mode: RecordMode::Tally,
            artifacts: None,
            declared_tally: Some(DeclaredTally::new(retrieved, fp)),
            granularity: None,
            notes: String::new(),
        }
    }

    #[test]
    fn append_gold_then_candidate() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CaseStore::open_or_create(dir.path()).unwrap();
        let g = rec("e1", "expert", Role::Gold, 12, 0, "2020-01-01T00:00:00Z");
        let c = rec("e1", "tool", Role::Candidate, 6, 2, "2020-01-02T00:00:00Z");
        assert_eq!(s.append(g.clone()).unwrap(), AppendOutcome::Appended);
        assert_eq!(s.append(c.clone()).unwrap(), AppendOutcome::Appended);
        let (gold, cands) = s.pair_records("C1", "e1").unwrap();
        assert_eq!(gold, &g);
        assert_eq!(cands, vec![&c]);

        let reopened = CaseStore::open(dir.path()).unwrap();
        assert_eq!(reopened.records(), s.records());
        assert!(dir.path().join(RECORDS).join(record_file_name(&g.key())).exists());
    }

    #[test]
    fn identical_append_is_noop() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CaseStore::open_or_create(dir.path()).unwrap();
        let g = rec("e1", "expert", Role::Gold, 12, 0, "2020-01-01T00:00:00Z");
        s.append(g.clone()).unwrap();
        let before = fs::read(dir.path().join(LEDGER)).unwrap();
        assert_eq!(s.append(g).unwrap(), AppendOutcome::Unchanged);
        assert_eq!(fs::read(dir.path().join(LEDGER)).unwrap(), before);
        assert_eq!(s.records().len(), 1);
    }

    #[test]
    fn conflicting_gold_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CaseStore::open_or_create(dir.path()).unwrap();
        s.append(rec("e1", "expert", Role::Gold, 12, 0, "2020-01-01T00:00:00Z"))
            .unwrap();
        let same_key = rec("e1", "expert", Role::Gold, 13, 0, "2020-01-01T00:00:00Z");
        assert!(matches!(s.append(same_key), Err(StoreError::Conflict(_))));
        let other_examiner = rec("e1", "expert2", Role::Gold, 12, 0, "2020-01-01T00:00:00Z");
        assert!(matches!(
            s.append(other_examiner),
            Err(StoreError::GoldConflict { .. })
        ));
    }

    #[test]
    fn missing_gold_is_not_ready() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CaseStore::open_or_create(dir.path()).unwrap();
        s.append(rec("e1", "tool", Role::Candidate, 6, 2, "2020-01-02T00:00:00Z"))
            .unwrap();
        assert!(matches!(
            s.pair_records("C1", "e1"),
            Err(StoreError::NotReady { .. })
        ));
    }

    #[test]
    fn gold_without_candidates() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CaseStore::open_or_create(dir.path()).unwrap();
        s.append(rec("e1", "expert", Role::Gold, 1, 0, "2020-01-01T00:00:00Z"))
            .unwrap();
        let (_, cands) = s.pair_records("C1", "e1").unwrap();
        assert!(cands.is_empty());
    }

    #[test]
    fn candidates_ordered_by_time_then_examiner() {
        let dir = tempfile::tempdir().unwrap();
        let mut s = CaseStore::open_or_create(dir.path()).unwrap();
        s.append(rec("e1", "expert", Role::Gold, 5, 0, "2020-01-01T00:00:00Z")).unwrap();
        s.append(rec("e1", "zed", Role::Candidate, 1, 0, "2020-01-02T00:00:00Z")).unwrap();
        s.append(rec("e1", "amy", Role::Candidate, 1, 0, "2020-01-02T00:00:00Z")).unwrap();
        // same instant expressed with a different offset sorts by instant
        s.append(rec("e1", "bob", Role::Candidate, 1, 0, "2020-01-02T08:00:00+09:00")).unwrap();
        let (_, c) = s.pair_records("C1", "e1").unwrap();
        let names: Vec<_> = c.iter().map(|r| r.examiner_id.as_str()).collect();
        assert_eq!(names, vec!["bob", "amy", "zed"]);
    }

    #[test]
    fn file_names_are_injective() {
        let mut a = rec("a+b", "x", Role::Gold, 0, 0, "2020-01-01T00:00:00Z").key();
        let mut b = a.clone();
        a.exhibit_id = "a".into();
        a.examiner_id = "b+x".into();
        b.exhibit_id = "a+b".into();
        b.examiner_id = "x".into();
        assert_ne!(record_file_name(&a), record_file_name(&b));
        assert!(!record_file_name(&a).contains('/'));
    }

    #[test]
    fn campaign_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = CaseStore::open_or_create(dir.path()).unwrap();
        let mut c = MeasurementCampaign::new(
            "prelim",
            "triage-v1",
            "full-analysis",
            SamplingPlan::interval(10, 0).unwrap(),
        );
        c.advance(1, "preliminary analysis unit").unwrap();
        s.save_campaign(&c).unwrap();
        assert_eq!(s.load_campaign("prelim").unwrap(), c);
        assert_eq!(s.campaign_ids().unwrap(), vec!["prelim".to_string()]);
        assert!(matches!(
            s.load_campaign("nope"),
            Err(StoreError::UnknownCampaign(_))
        ));
    }
}
