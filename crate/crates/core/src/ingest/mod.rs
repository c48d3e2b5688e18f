//! Sensor tier: wire protocol, replay files, the TCP ingestion server and
//! the simulator that feeds them.

pub mod server;
pub mod sim;
pub mod wire;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{VitalKind, VitalSample};

pub use server::{serve, ServerHandle};
pub use sim::{simulate, Injection, ScenarioSpec, Shape};
pub use wire::{parse_line, to_line, write_samples};

/// Receiver of parsed samples. The server serializes all calls.
pub trait SampleSink {
    fn accept(&mut self, sample: VitalSample) -> Result<()>;

    /// Called once per line that failed to parse.
    fn parse_failure(&mut self) {}
}

impl SampleSink for Vec<VitalSample> {
    fn accept(&mut self, sample: VitalSample) -> Result<()> {
        self.push(sample);
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub lines_read: u64,
    pub parse_failures: u64,
    pub samples_accepted: u64,
    pub per_patient: BTreeMap<String, u64>,
    /// Samples whose seq did not exceed the previous one for the same
    /// patient and kind. They are still forwarded.
    pub seq_violations: u64,
    #[serde(skip)]
    last_seq: HashMap<(String, VitalKind), u64>,
}

impl IngestStats {
    /// Account for one non-blank line and return the parsed sample, if any.
    pub fn record_line(&mut self, line: &str) -> Option<VitalSample> {
        self.lines_read += 1;
        match parse_line(line) {
            Ok(s) => {
                self.samples_accepted += 1;
                *self.per_patient.entry(s.patient_id.clone()).or_insert(0) += 1;
                let key = (s.patient_id.clone(), s.kind);
                if let Some(prev) = self.last_seq.insert(key, s.seq) {
                    if s.seq <= prev {
                        self.seq_violations += 1;
                    }
                }
                Some(s)
            }
            Err(e) => {
                log::debug!("rejected line {}: {e}", self.lines_read);
                self.parse_failures += 1;
                None
            }
        }
    }
}

fn is_blank(line: &[u8]) -> bool {
    line.iter().all(u8::is_ascii_whitespace)
}

/// Feed a replay file to `sink` in file order. With a positive
/// `speed_factor` the sample timestamps are honoured, scaled by that
/// factor; zero means as fast as possible.
pub fn replay<S: SampleSink + ?Sized>(path: &Path, speed_factor: f64, sink: &mut S) -> Result<IngestStats> {
    let file = File::open(path)?;
    replay_reader(BufReader::new(file), speed_factor, sink)
}

pub fn replay_reader<R: BufRead, S: SampleSink + ?Sized>(
    mut reader: R,
    speed_factor: f64,
    sink: &mut S,
) -> Result<IngestStats> {
    let mut stats = IngestStats::default();
    let mut buf = Vec::new();
    let started = Instant::now();
    let mut first_ts: Option<i64> = None;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            break;
        }
        if is_blank(&buf) {
            continue;
        }
        let line = String::from_utf8_lossy(&buf);
        match stats.record_line(&line) {
            Some(s) => {
                if speed_factor > 0.0 {
                    let t0 = *first_ts.get_or_insert(s.ts_ms);
                    let due = Duration::from_secs_f64(((s.ts_ms - t0).max(0) as f64 / 1000.0) / speed_factor);
                    let elapsed = started.elapsed();
                    if due > elapsed {
                        std::thread::sleep(due - elapsed);
                    }
                }
                sink.accept(s)?;
            }
            None => sink.parse_failure(),
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn lines(n: usize) -> String {
        (0..n)
            .map(|i| {
                format!(
                    "{{\"patient\":\"p-001\",\"kind\":\"heart_rate\",\"ts_ms\":{},\"value\":72.0,\"seq\":{}}}\n",
                    i * 2,
                    i
                )
            })
            .collect()
    }

    #[test]
    fn replay_counts() {
        let mut sink = Vec::new();
        let stats = replay_reader(Cursor::new(lines(5)), 0.0, &mut sink).unwrap();
        assert_eq!(stats.samples_accepted, 5);
        assert_eq!(stats.lines_read, 5);
        assert_eq!(sink.len(), 5);
    }

    #[test]
    fn truncated_final_line_is_one_failure() {
        let mut text = lines(3);
        text.push_str("{\"patient\":\"p-001\",\"kind\":\"hea");
        let mut sink = Vec::new();
        let stats = replay_reader(Cursor::new(text), 0.0, &mut sink).unwrap();
        assert_eq!((stats.samples_accepted, stats.parse_failures, stats.lines_read), (3, 1, 4));
    }

    #[test]
    fn speed_factor_changes_timing_not_content() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        replay_reader(Cursor::new(lines(10)), 0.0, &mut a).unwrap();
        let t = Instant::now();
        replay_reader(Cursor::new(lines(10)), 1.0, &mut b).unwrap();
        assert!(t.elapsed() >= Duration::from_millis(18));
        assert_eq!(a, b);
    }

    #[test]
    fn seq_regressions_are_counted() {
        let mut text = lines(3);
        text.push_str(&lines(1));
        let mut sink = Vec::new();
        let stats = replay_reader(Cursor::new(text), 0.0, &mut sink).unwrap();
        assert_eq!(stats.seq_violations, 1);
        assert_eq!(sink.len(), 4);
    }

    #[test]
    fn missing_file_is_io_error() {
        let mut sink = Vec::new();
        assert!(matches!(
            replay(Path::new("/nonexistent/replay.jsonl"), 0.0, &mut sink),
            Err(crate::Error::Io(_))
        ));
    }
}
