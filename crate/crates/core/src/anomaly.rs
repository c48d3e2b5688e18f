//! Epoch alignment and reading-error vs anomaly classification.
//!
//! An out-of-range cell is a reading error when nothing corroborates it:
//! every other cell of its row is in range and the same column in the
//! neighbouring rows is in range too. Otherwise it is an anomaly.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, NormalRanges, VitalGroup, VitalSample};

/// Sample values of one epoch, indexed by [`crate::model::VitalKind::index`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// Epoch start.
    pub ts_ms: i64,
    pub values: [Option<f64>; 6],
}

impl Record {
    pub fn is_empty(&self) -> bool {
        self.values.iter().all(Option::is_none)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordGrid {
    pub rows: Vec<Record>,
}

pub fn epoch_ms(epoch_s: f64) -> Result<i64> {
    if !(epoch_s.is_finite() && epoch_s > 0.0) {
        return Err(Error::validation(format!("epoch width {epoch_s} must be positive")));
    }
    let ms = (epoch_s * 1000.0).round() as i64;
    if ms < 1 {
        return Err(Error::validation("epoch width below one millisecond"));
    }
    Ok(ms)
}

/// Bucket one patient's samples into fixed epochs. Each cell keeps the
/// latest sample of its kind; epochs without samples produce no row.
pub fn align_epochs(samples: &[VitalSample], epoch_s: f64) -> Result<RecordGrid> {
    let width = epoch_ms(epoch_s)?;
    if let Some(first) = samples.first() {
        if samples.iter().any(|s| s.patient_id != first.patient_id) {
            return Err(Error::validation("align_epochs expects samples from one patient"));
        }
    }
    let mut epochs: BTreeMap<i64, [Option<(i64, u64, f64)>; 6]> = BTreeMap::new();
    for s in samples {
        let e = s.ts_ms.div_euclid(width);
        let cell = &mut epochs.entry(e).or_insert([None; 6])[s.kind.index()];
        let newer = cell.map_or(true, |(ts, seq, _)| (s.ts_ms, s.seq) >= (ts, seq));
        if newer {
            *cell = Some((s.ts_ms, s.seq, s.value));
        }
    }
    let rows = epochs
        .into_iter()
        .map(|(e, cells)| Record {
            ts_ms: e * width,
            values: cells.map(|c| c.map(|(_, _, v)| v)),
        })
        .filter(|r| !r.is_empty())
        .collect();
    Ok(RecordGrid { rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RangeStatus {
    Below,
    In,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnomalyLabel {
    Normal,
    ReadingError,
    Anomaly,
}

impl AnomalyLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyLabel::Normal => "normal",
            AnomalyLabel::ReadingError => "reading_error",
            AnomalyLabel::Anomaly => "anomaly",
        }
    }
}

pub type StatusRow = [Option<RangeStatus>; 5];
pub type LabelRow = [Option<AnomalyLabel>; 5];
pub type BandRow = [Option<Band>; 5];

/// Band of each parameter group present in a record.
pub fn record_bands(record: &Record, ranges: &NormalRanges, age: u32) -> Result<BandRow> {
    let mut out = [None; 5];
    for g in VitalGroup::ALL {
        out[g.index()] = ranges.group_band(g, &record.values, age)?;
    }
    Ok(out)
}

/// Which side of the normal interval each present group falls on. A blood
/// pressure cell takes the side of its worse component.
pub fn record_status(record: &Record, ranges: &NormalRanges, age: u32) -> Result<StatusRow> {
    let mut out = [None; 5];
    for g in VitalGroup::ALL {
        let mut worst: Option<(u8, RangeStatus)> = None;
        for kind in g.kinds() {
            if let Some(v) = record.values[kind.index()] {
                let iv = ranges.normal_range(*kind, age)?;
                let band = ranges.band(*kind, v, age)?;
                let status = if v > iv.hi {
                    RangeStatus::Above
                } else if v < iv.lo {
                    RangeStatus::Below
                } else {
                    RangeStatus::In
                };
                if worst.map_or(true, |(r, _)| band.rank() > r) {
                    worst = Some((band.rank(), status));
                }
            }
        }
        out[g.index()] = worst.map(|(_, s)| s);
    }
    Ok(out)
}

fn in_range(s: Option<RangeStatus>) -> bool {
    matches!(s, None | Some(RangeStatus::In))
}

/// Labels of `cur` given its temporal neighbours, if they exist.
pub fn classify_row(prev: Option<&StatusRow>, cur: &StatusRow, next: Option<&StatusRow>) -> LabelRow {
    let mut out = [None; 5];
    for c in 0..5 {
        out[c] = cur[c].map(|s| {
            if s == RangeStatus::In {
                return AnomalyLabel::Normal;
            }
            let row_quiet = (0..5).filter(|&k| k != c).all(|k| in_range(cur[k]));
            let column_quiet = [prev, next].into_iter().flatten().all(|row| in_range(row[c]));
            if row_quiet && column_quiet {
                AnomalyLabel::ReadingError
            } else {
                AnomalyLabel::Anomaly
            }
        });
    }
    out
}

pub fn classify_status(grid: &[StatusRow]) -> Vec<LabelRow> {
    (0..grid.len())
        .map(|r| {
            let prev = r.checked_sub(1).map(|p| &grid[p]);
            classify_row(prev, &grid[r], grid.get(r + 1))
        })
        .collect()
}

pub fn classify_grid(grid: &RecordGrid, ranges: &NormalRanges, age: u32) -> Result<Vec<LabelRow>> {
    if grid.rows.is_empty() {
        return Err(Error::validation("cannot classify an empty grid"));
    }
    let statuses = grid
        .rows
        .iter()
        .map(|r| record_status(r, ranges, age))
        .collect::<Result<Vec<_>>>()?;
    Ok(classify_status(&statuses))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowFlag {
    Normal,
    Suspect,
    Emergency,
}

/// Emergency on two or more anomalies or any extreme-band anomaly; suspect
/// on exactly one other anomaly.
pub fn row_flag(labels: &LabelRow, bands: &BandRow) -> RowFlag {
    let anomalies: Vec<usize> = (0..5)
        .filter(|&c| labels[c] == Some(AnomalyLabel::Anomaly))
        .collect();
    let extreme = anomalies
        .iter()
        .any(|&c| bands[c].is_some_and(Band::is_extreme));
    if anomalies.len() >= 2 || extreme {
        RowFlag::Emergency
    } else if anomalies.len() == 1 {
        RowFlag::Suspect
    } else {
        RowFlag::Normal
    }
}

pub fn row_flags(labels: &[LabelRow], bands: &[BandRow]) -> Vec<RowFlag> {
    labels.iter().zip(bands).map(|(l, b)| row_flag(l, b)).collect()
}

pub fn labels_csv(grid: &RecordGrid, labels: &[LabelRow]) -> String {
    let mut s = String::from("ts_ms");
    for g in VitalGroup::ALL {
        s.push(',');
        s.push_str(g.token());
    }
    s.push('\n');
    for (row, l) in grid.rows.iter().zip(labels) {
        s.push_str(&row.ts_ms.to_string());
        for cell in l {
            s.push(',');
            if let Some(x) = cell {
                s.push_str(x.as_str());
            }
        }
        s.push('\n');
    }
    s
}
