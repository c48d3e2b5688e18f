//! Append-only JSONL event log, one file per patient under `<data_dir>/patients`.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::{AnomalyLabel, RowFlag};
use crate::clean::CleanReport;
use crate::error::Result;
use crate::features::FeatureClass;
use crate::model::VitalSample;
use crate::triage::TriageReport;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureCheck {
    pub skew: f64,
    pub tau: f64,
    pub class: FeatureClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyFlags {
    pub patient_id: String,
    pub ts_ms: i64,
    /// Per parameter group in column order; absent cells are null.
    pub labels: [Option<AnomalyLabel>; 5],
    pub flag: RowFlag,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_check: Option<FeatureCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientCleanReport {
    pub patient_id: String,
    #[serde(flatten)]
    pub report: CleanReport,
}

/// One log line. The `type` field names the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    Sample(VitalSample),
    CleanReport(PatientCleanReport),
    Anomaly(AnomalyFlags),
    Triage(TriageReport),
}

impl Event {
    pub fn patient_id(&self) -> &str {
        match self {
            Event::Sample(s) => &s.patient_id,
            Event::CleanReport(r) => &r.patient_id,
            Event::Anomaly(a) => &a.patient_id,
            Event::Triage(t) => &t.patient_id,
        }
    }
}

/// Destination for pipeline events.
pub trait EventSink {
    fn emit(&mut self, event: &Event) -> Result<()>;

    fn flush(&mut self) -> Result<()> {
        Ok(())
    }
}

impl EventSink for Vec<Event> {
    fn emit(&mut self, event: &Event) -> Result<()> {
        self.push(event.clone());
        Ok(())
    }
}

/// File-name-safe form of a patient id. Characters outside `[A-Za-z0-9._-]`
/// are written as `%XX`.
pub fn file_stem(patient_id: &str) -> String {
    let mut s = String::with_capacity(patient_id.len());
    for b in patient_id.bytes() {
        if b.is_ascii_alphanumeric() || b == b'-' || b == b'_' || (b == b'.' && !s.is_empty()) {
            s.push(b as char);
        } else {
            s.push_str(&format!("%{b:02X}"));
        }
    }
    s
}

pub struct EventLog {
    dir: PathBuf,
    writers: HashMap<String, BufWriter<File>>,
}

impl EventLog {
    pub fn open(data_dir: &Path) -> Result<Self> {
        let dir = data_dir.join("patients");
        std::fs::create_dir_all(&dir)?;
        Ok(EventLog {
            dir,
            writers: HashMap::new(),
        })
    }

    pub fn patient_path(data_dir: &Path, patient_id: &str) -> PathBuf {
        data_dir
            .join("patients")
            .join(format!("{}.jsonl", file_stem(patient_id)))
    }

    /// Read every complete record of one patient. A final line that does
    /// not parse (an interrupted write) is skipped with a warning; damage
    /// anywhere else is an error.
    pub fn read_patient(data_dir: &Path, patient_id: &str) -> Result<Vec<Event>> {
        let path = Self::patient_path(data_dir, patient_id);
        let reader = BufReader::new(File::open(&path)?);
        let lines: Vec<String> = reader.lines().collect::<std::io::Result<_>>()?;
        let mut events = Vec::with_capacity(lines.len());
        let last = lines.len().saturating_sub(1);
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<Event>(line) {
                Ok(e) => events.push(e),
                Err(e) if i == last => {
                    log::warn!("{}: skipping truncated final record ({e})", path.display());
                }
                Err(e) => return Err(e.into()),
            }
        }
        Ok(events)
    }

    pub fn patients(data_dir: &Path) -> Result<Vec<PathBuf>> {
        let dir = data_dir.join("patients");
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        out.sort();
        Ok(out)
    }
}

impl EventSink for EventLog {
    fn emit(&mut self, event: &Event) -> Result<()> {
        let id = event.patient_id();
        if !self.writers.contains_key(id) {
            let path = self.dir.join(format!("{}.jsonl", file_stem(id)));
            let f = OpenOptions::new().create(true).append(true).open(path)?;
            self.writers.insert(id.to_string(), BufWriter::new(f));
        }
        let w = self.writers.get_mut(id).expect("inserted above");
        serde_json::to_writer(&mut *w, event)?;
        w.write_all(b"\n")?;
        Ok(())
    }

    fn flush(&mut self) -> Result<()> {
        for w in self.writers.values_mut() {
            w.flush()?;
        }
        Ok(())
    }
}

impl Drop for EventLog {
    fn drop(&mut self) {
        let _ = EventSink::flush(self);
    }
}
