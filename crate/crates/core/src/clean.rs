//! Quality gate over parsed samples: duplicates, empty identities and
//! physically impossible values are dropped and counted.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::model::{Interval, VitalKind, VitalSample};

/// Hard physical bounds; anything outside is sensor garbage, not physiology.
pub fn physical_bounds(kind: VitalKind) -> Interval {
    match kind {
        VitalKind::HeartRate => Interval::new(20.0, 250.0),
        VitalKind::RespiratoryRate => Interval::new(2.0, 80.0),
        VitalKind::BloodPressureSystolic => Interval::new(40.0, 300.0),
        VitalKind::BloodPressureDiastolic => Interval::new(20.0, 200.0),
        VitalKind::BodyTemperature => Interval::new(30.0, 45.0),
        VitalKind::BloodPh => Interval::new(6.5, 8.0),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub dropped_empty: u64,
    pub dropped_duplicates: u64,
    pub dropped_out_of_physical_bounds: u64,
    pub rejected_unstructured: u64,
    pub accepted: u64,
}

impl CleanReport {
    pub fn total(&self) -> u64 {
        self.accepted
            + self.dropped_empty
            + self.dropped_duplicates
            + self.dropped_out_of_physical_bounds
            + self.rejected_unstructured
    }

    pub fn drops(&self) -> u64 {
        self.total() - self.accepted
    }

    pub fn merge(&mut self, other: &CleanReport) {
        self.dropped_empty += other.dropped_empty;
        self.dropped_duplicates += other.dropped_duplicates;
        self.dropped_out_of_physical_bounds += other.dropped_out_of_physical_bounds;
        self.rejected_unstructured += other.rejected_unstructured;
        self.accepted += other.accepted;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Empty,
    Duplicate,
    OutOfBounds,
}

type DedupKey = (String, VitalKind, i64, u64);

/// Streaming form of [`clean_batch`]; remembers every accepted key.
#[derive(Debug, Default)]
pub struct Cleaner {
    seen: HashSet<DedupKey>,
    report: CleanReport,
}

impl Cleaner {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn check(&mut self, s: &VitalSample) -> Verdict {
        let verdict = if s.patient_id.trim().is_empty() || !s.value.is_finite() {
            self.report.dropped_empty += 1;
            Verdict::Empty
        } else if !physical_bounds(s.kind).contains(s.value) {
            self.report.dropped_out_of_physical_bounds += 1;
            Verdict::OutOfBounds
        } else if !self
            .seen
            .insert((s.patient_id.clone(), s.kind, s.ts_ms, s.seq))
        {
            self.report.dropped_duplicates += 1;
            Verdict::Duplicate
        } else {
            self.report.accepted += 1;
            Verdict::Accept
        };
        verdict
    }

    /// Count lines that never parsed into a sample.
    pub fn note_unstructured(&mut self, n: u64) {
        self.report.rejected_unstructured += n;
    }

    pub fn report(&self) -> CleanReport {
        self.report
    }
}

pub fn clean_batch(samples: &[VitalSample]) -> (Vec<VitalSample>, CleanReport) {
    let mut cleaner = Cleaner::new();
    let accepted = samples
        .iter()
        .filter(|s| cleaner.check(s) == Verdict::Accept)
        .cloned()
        .collect();
    (accepted, cleaner.report())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hr(value: f64, seq: u64) -> VitalSample {
        VitalSample {
            patient_id: "p-001".into(),
            kind: VitalKind::HeartRate,
            ts_ms: 1_000 * seq as i64,
            value,
            seq,
        }
    }

    #[test]
    fn duplicate_dropped() {
        let s = hr(72.0, 1);
        let (out, r) = clean_batch(&[s.clone(), s]);
        assert_eq!(out.len(), 1);
        assert_eq!(r.dropped_duplicates, 1);
        assert_eq!(r.accepted, 1);
    }

    #[test]
    fn repeated_value_with_new_seq_survives() {
        let a = hr(72.0, 1);
        let mut b = a.clone();
        b.seq = 2;
        let (out, _) = clean_batch(&[a, b]);
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn out_of_bounds_dropped() {
        let (out, r) = clean_batch(&[hr(400.0, 1), hr(19.9, 2), hr(250.0, 3)]);
        assert_eq!(out.len(), 1);
        assert_eq!(r.dropped_out_of_physical_bounds, 2);
    }

    #[test]
    fn empty_input() {
        let (out, r) = clean_batch(&[]);
        assert!(out.is_empty());
        assert_eq!(r, CleanReport::default());
    }

    #[test]
    fn empty_patient_dropped() {
        let mut s = hr(72.0, 1);
        s.patient_id = " ".into();
        let (_, r) = clean_batch(&[s]);
        assert_eq!(r.dropped_empty, 1);
    }

    #[test]
    fn unstructured_folds_into_total() {
        let mut c = Cleaner::new();
        c.check(&hr(72.0, 1));
        c.note_unstructured(2);
        assert_eq!(c.report().total(), 3);
        assert_eq!(c.report().drops(), 2);
    }
}
