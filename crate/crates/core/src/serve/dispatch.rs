//! Alert fan-out to a durable, append-only outbox.
//!
//! Delivery is at-least-once; the dedup key `subscriber|run_time|level`
//! suppresses repeats of an already recorded alert.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::risk::{RiskAssessment, RiskLevel};
use super::Location;
use crate::cycle::iso8601;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subscriber {
    pub id: String,
    pub location: Location,
    pub opted_in: bool,
    pub min_severity: RiskLevel,
    #[serde(default = "default_locale")]
    pub locale: String,
}

fn default_locale() -> String {
    "en".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlertMessage {
    pub recipient: String,
    pub severity: RiskLevel,
    pub text: String,
    pub template_id: String,
    pub created_at: DateTime<Utc>,
}

/// One line of the outbox file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutboxRecord {
    pub recipient: String,
    pub severity: RiskLevel,
    pub template_id: String,
    pub text: String,
    pub dedup_key: String,
    pub timestamp: DateTime<Utc>,
}

pub trait Outbox: Send + Sync {
    fn contains(&self, dedup_key: &str) -> bool;
    fn append(&self, record: &OutboxRecord) -> io::Result<()>;
}

/// Newline-delimited JSON outbox. Appends are serialized and synced.
pub struct FileOutbox {
    path: PathBuf,
    state: Mutex<(File, HashSet<String>)>,
}

impl FileOutbox {
    pub fn open(path: impl Into<PathBuf>) -> io::Result<Self> {
        let path = path.into();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir)?;
        }
        let mut keys = HashSet::new();
        if path.exists() {
            for line in BufReader::new(File::open(&path)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                // A torn final line from a crash is ignored; its alert is resent.
                if let Ok(r) = serde_json::from_str::<OutboxRecord>(&line) {
                    keys.insert(r.dedup_key);
                }
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { path, state: Mutex::new((file, keys)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> io::Result<Vec<OutboxRecord>> {
        let text = std::fs::read_to_string(&self.path)?;
        Ok(text.lines().filter_map(|l| serde_json::from_str(l).ok()).collect())
    }
}

impl Outbox for FileOutbox {
    fn contains(&self, dedup_key: &str) -> bool {
        self.state.lock().unwrap().1.contains(dedup_key)
    }

    fn append(&self, record: &OutboxRecord) -> io::Result<()> {
        let mut line = serde_json::to_vec(record).expect("record serializes");
        line.push(b'\n');
        let mut state = self.state.lock().unwrap();
        state.0.write_all(&line)?;
        state.0.sync_data()?;
        state.1.insert(record.dedup_key.clone());
        Ok(())
    }
}

/// A subscriber with the assessment and rendered text for their location.
#[derive(Debug, Clone)]
pub struct AlertCandidate {
    pub subscriber: Subscriber,
    pub run_time: DateTime<Utc>,
    pub assessment: RiskAssessment,
    pub text: String,
    pub template_id: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DispatchReport {
    pub sent: Vec<String>,
    pub skipped_opted_out: usize,
    pub skipped_below_severity: usize,
    pub skipped_duplicate: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl DispatchReport {
    pub fn skipped(&self) -> usize {
        self.skipped_opted_out + self.skipped_below_severity + self.skipped_duplicate
    }
}

pub fn dedup_key(subscriber: &str, run_time: DateTime<Utc>, level: RiskLevel) -> String {
    format!("{subscriber}|{}|{level}", iso8601(run_time))
}

/// Whether an assessment at `level` is worth an alert for `min`.
pub fn meets(level: RiskLevel, min: RiskLevel) -> bool {
    level != RiskLevel::Normal && level >= min
}

/// Write one message per eligible candidate. On an outbox failure the
/// returned report lists the ids delivered before it, with `error` set.
pub fn dispatch_alerts(
    candidates: &[AlertCandidate],
    outbox: &dyn Outbox,
    now: DateTime<Utc>,
) -> Result<(DispatchReport, Vec<AlertMessage>), DispatchReport> {
    let mut report = DispatchReport::default();
    let mut messages = Vec::new();
    for c in candidates {
        let s = &c.subscriber;
        let level = c.assessment.level;
        if !s.opted_in {
            report.skipped_opted_out += 1;
            continue;
        }
        if !meets(level, s.min_severity) {
            report.skipped_below_severity += 1;
            continue;
        }
        let key = dedup_key(&s.id, c.run_time, level);
        if outbox.contains(&key) {
            report.skipped_duplicate += 1;
            continue;
        }
        let record = OutboxRecord {
            recipient: s.id.clone(),
            severity: level,
            template_id: c.template_id.clone(),
            text: c.text.clone(),
            dedup_key: key,
            timestamp: now,
        };
        if let Err(e) = outbox.append(&record) {
            report.error = Some(format!("outbox write failed for {}: {e}", s.id));
            return Err(report);
        }
        report.sent.push(s.id.clone());
        messages.push(AlertMessage {
            recipient: record.recipient,
            severity: level,
            text: record.text,
            template_id: record.template_id,
            created_at: now,
        });
    }
    Ok((report, messages))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn run() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2026, 2, 8, 0, 0, 0).unwrap()
    }

    fn candidate(id: &str, opted_in: bool, min: RiskLevel, level: RiskLevel) -> AlertCandidate {
        AlertCandidate {
            subscriber: Subscriber {
                id: id.into(),
                location: Location::place("Skukuza"),
                opted_in,
                min_severity: min,
                locale: "en".into(),
            },
            run_time: run(),
            assessment: RiskAssessment { level, signals: Vec::new(), window: Some((0, 6)) },
            text: format!("alert for {id}"),
            template_id: format!("{level}.en"),
        }
    }

    #[test]
    fn filters_by_opt_in_and_severity_and_dedups() {
        let dir = tempfile::tempdir().unwrap();
        let outbox = FileOutbox::open(dir.path().join("outbox.ndjson")).unwrap();
        let level = RiskLevel::Elevated;
        let subs = [
            candidate("severe-only", true, RiskLevel::Severe, level),
            candidate("elevated-plus", true, RiskLevel::Elevated, level),
            candidate("opted-out", false, RiskLevel::Elevated, level),
        ];
        let (report, msgs) = dispatch_alerts(&subs, &outbox, run()).unwrap();
        assert_eq!(report.sent, vec!["elevated-plus"]);
        assert_eq!((report.skipped_below_severity, report.skipped_opted_out), (1, 1));
        assert_eq!(msgs.len(), 1);
        assert_eq!(msgs[0].severity, RiskLevel::Elevated);

        let (again, _) = dispatch_alerts(&subs, &outbox, run()).unwrap();
        assert!(again.sent.is_empty());
        assert_eq!(again.skipped_duplicate, 1);

        // Dedup survives reopening the outbox.
        let reopened = FileOutbox::open(dir.path().join("outbox.ndjson")).unwrap();
        assert_eq!(dispatch_alerts(&subs, &reopened, run()).unwrap().0.skipped_duplicate, 1);
        let records = reopened.records().unwrap();
        assert_eq!(records.len(), 1);
        assert_eq!(records[0].dedup_key, "elevated-plus|2026-02-08T00:00:00Z|elevated");
    }

    #[test]
    fn empty_input_gives_empty_report() {
        let dir = tempfile::tempdir().unwrap();
        let outbox = FileOutbox::open(dir.path().join("o.ndjson")).unwrap();
        assert_eq!(dispatch_alerts(&[], &outbox, run()).unwrap().0, DispatchReport::default());
    }

    #[test]
    fn normal_never_alerts() {
        assert!(!meets(RiskLevel::Normal, RiskLevel::Normal));
        assert!(meets(RiskLevel::Severe, RiskLevel::Elevated));
    }

    struct Flaky {
        ok_writes: AtomicUsize,
        keys: Mutex<HashSet<String>>,
    }

    impl Outbox for Flaky {
        fn contains(&self, k: &str) -> bool {
            self.keys.lock().unwrap().contains(k)
        }
        fn append(&self, r: &OutboxRecord) -> io::Result<()> {
            if self.ok_writes.fetch_sub(1, Ordering::SeqCst) == 0 {
                return Err(io::Error::other("disk full"));
            }
            self.keys.lock().unwrap().insert(r.dedup_key.clone());
            Ok(())
        }
    }

    #[test]
    fn outbox_failure_reports_partial_delivery() {
        let outbox = Flaky { ok_writes: AtomicUsize::new(1), keys: Mutex::new(HashSet::new()) };
        let subs: Vec<_> = ["a", "b", "c"].iter().map(|id| candidate(id, true, RiskLevel::Elevated, RiskLevel::Severe)).collect();
        let partial = dispatch_alerts(&subs, &outbox, run()).unwrap_err();
        assert_eq!(partial.sent, vec!["a"]);
        assert!(partial.error.unwrap().contains("b"));
        // Retrying resumes: "a" is deduplicated, the rest go out.
        let (retry, _) = dispatch_alerts(&subs, &outbox, run()).unwrap();
        assert_eq!(retry.sent, vec!["b", "c"]);
        assert_eq!(retry.skipped_duplicate, 1);
    }
}
