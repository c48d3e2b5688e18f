//! Streaming per-patient processing: clean, epoch alignment, anomaly
//! labelling, feature consistency, forecasting and triage.
//!
//! Every time value comes from sample timestamps, so the same input
//! sequence always yields the same events.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::anomaly::{self, AnomalyLabel, BandRow, LabelRow, Record, RowFlag, StatusRow};
use crate::clean::{CleanReport, Cleaner, Verdict};
use crate::config::RunConfig;
use crate::error::Result;
use crate::eventlog::{
    file_stem, AnomalyFlags, Event, EventSink, FeatureCheck, PatientCleanReport,
};
use crate::features::{self, Channel, FeatureState, LinearMap};
use crate::forecast::{Checkpoint, LstmModel, LstmState, Standardizer};
use crate::ingest::{IngestStats, SampleSink};
use crate::model::{
    Band, BandedVitals, NormalRanges, PatientProfile, RiskLevel, VitalGroup,
    VitalKind, VitalSample,
};
use crate::triage::{self, TriageReport};

/// Age assumed for patients without a profile.
pub const DEFAULT_AGE_YEARS: u32 = 30;
/// Paired feature observations collected before the heart-to-respiration
/// map is fitted.
pub const FEATURE_WARMUP: usize = 30;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub epoch_s: f64,
    pub feature_timeout_s: f64,
    pub reliabilities: [f64; 5],
    pub ranges: NormalRanges,
    /// Directory holding `<patient>.<kind>.json` forecaster checkpoints.
    pub models_dir: Option<PathBuf>,
}

impl PipelineConfig {
    pub fn from_run_config(cfg: &RunConfig, ranges: NormalRanges) -> Self {
        PipelineConfig {
            epoch_s: cfg.epoch_s,
            feature_timeout_s: cfg.feature_timeout_s,
            reliabilities: cfg.reliabilities,
            ranges,
            models_dir: Some(cfg.data_dir.join("models")),
        }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            epoch_s: crate::config::DEFAULT_EPOCH_S,
            feature_timeout_s: crate::config::DEFAULT_FEATURE_TIMEOUT_S,
            reliabilities: [crate::config::DEFAULT_RELIABILITY; 5],
            ranges: NormalRanges::default(),
            models_dir: None,
        }
    }
}

pub fn checkpoint_path(models_dir: &Path, patient_id: &str, kind: VitalKind) -> PathBuf {
    models_dir.join(format!("{}.{}.json", file_stem(patient_id), kind.token()))
}

/// Next-value predictor for one vital kind.
enum Forecaster {
    /// Last observed value.
    Persistence(Option<f64>),
    Lstm {
        model: Box<LstmModel>,
        standardizer: Standardizer,
        state: LstmState,
        next: Option<f64>,
    },
}

impl Forecaster {
    fn load(models_dir: Option<&Path>, patient_id: &str, kind: VitalKind) -> Self {
        let Some(dir) = models_dir else {
            return Forecaster::Persistence(None);
        };
        let path = checkpoint_path(dir, patient_id, kind);
        if !path.exists() {
            return Forecaster::Persistence(None);
        }
        match Checkpoint::load(&path).and_then(Checkpoint::into_parts) {
            Ok((model, standardizer)) => {
                let state = model.zero_state();
                Forecaster::Lstm {
                    model: Box::new(model),
                    standardizer,
                    state,
                    next: None,
                }
            }
            Err(e) => {
                log::warn!("{}: ignoring checkpoint ({e})", path.display());
                Forecaster::Persistence(None)
            }
        }
    }

    fn observe(&mut self, value: f64) {
        match self {
            Forecaster::Persistence(last) => *last = Some(value),
            Forecaster::Lstm {
                model,
                standardizer,
                state,
                next,
            } => {
                let z = model.step(state, standardizer.apply(value));
                *next = Some(standardizer.invert(z));
            }
        }
    }

    fn predict(&self) -> Option<f64> {
        match self {
            Forecaster::Persistence(last) => *last,
            Forecaster::Lstm { next, .. } => *next,
        }
    }
}

/// Heart/respiration consistency tracking: warm up, fit once, then check.
struct FeatureTrack {
    state: FeatureState,
    last_heart: Option<f64>,
    last_resp: Option<f64>,
    warmup: Vec<(Vec<f64>, Vec<f64>)>,
    fitted: Option<(LinearMap, f64)>,
}

impl FeatureTrack {
    fn new(ranges: &NormalRanges, age: u32, timeout_s: f64) -> Result<Self> {
        let hr = ranges.normal_range(VitalKind::HeartRate, age)?.mid();
        let rr = ranges.normal_range(VitalKind::RespiratoryRate, age)?.mid();
        Ok(FeatureTrack {
            state: FeatureState::new(vec![rr, 0.0], vec![hr, 0.0], timeout_s)?,
            last_heart: None,
            last_resp: None,
            warmup: Vec::new(),
            fitted: None,
        })
    }

    fn observe(&mut self, ts_ms: i64, heart: Option<f64>, resp: Option<f64>) -> Result<Option<FeatureCheck>> {
        if let Some(h) = heart {
            let d = self.last_heart.map_or(0.0, |p| h - p);
            self.last_heart = Some(h);
            self.state.update(Channel::Heart, &[h, d], ts_ms)?;
        }
        if let Some(r) = resp {
            let d = self.last_resp.map_or(0.0, |p| r - p);
            self.last_resp = Some(r);
            self.state.update(Channel::Respiration, &[r, d], ts_ms)?;
        }
        self.state.expire(ts_ms);
        if heart.is_none() || resp.is_none() {
            return Ok(None);
        }
        let h = self.state.heart_recent.clone();
        let r = self.state.resp_recent.clone();
        if let Some((map, tau)) = &self.fitted {
            let fr = map.apply(&h)?;
            return Ok(Some(FeatureCheck {
                skew: map.skew(&fr),
                tau: *tau,
                class: features::classify_feature_vector(map, &fr, *tau),
            }));
        }
        self.warmup.push((h, r));
        if self.warmup.len() >= FEATURE_WARMUP {
            let map = features::fit_map(&self.warmup)?;
            let skews = self
                .warmup
                .iter()
                .map(|(h, _)| map.apply(h).map(|fr| map.skew(&fr)))
                .collect::<Result<Vec<_>>>()?;
            let tau = features::skew_threshold(&skews)?.tau;
            self.fitted = Some((map, tau));
            self.warmup = Vec::new();
        }
        Ok(None)
    }
}

struct ClosedRow {
    record: Record,
    status: StatusRow,
    bands: BandRow,
}

struct PatientState {
    id: String,
    age: u32,
    cleaner: Cleaner,
    /// Index and cells of the epoch being filled: (ts, seq, value) per kind.
    open: Option<(i64, [Option<(i64, u64, f64)>; 6])>,
    prev_status: Option<StatusRow>,
    pending: Option<ClosedRow>,
    /// Band of each group at its last trustworthy reading.
    last_good: [Option<Band>; 5],
    features: Option<FeatureTrack>,
    forecasters: Vec<Forecaster>,
    late_samples: u64,
    epochs: u64,
    latest: Option<TriageReport>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub epochs: u64,
    pub late_samples: u64,
    pub latest_risk: Option<RiskLevel>,
    pub red_reports: u64,
}

/// Totals of one run. Contains no wall-clock values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub ingest: IngestStats,
    pub clean: CleanReport,
    pub triage_reports: u64,
    pub late_samples: u64,
    pub patients: BTreeMap<String, PatientSummary>,
    /// `clean.accepted == ingest.samples_accepted - sample drops`.
    pub conservation_ok: bool,
}

pub struct Pipeline<E: EventSink> {
    steps: StepConfig,
    models_dir: Option<PathBuf>,
    feature_timeout_s: f64,
    epoch_ms: i64,
    ages: HashMap<String, u32>,
    patients: BTreeMap<String, PatientState>,
    unstructured: u64,
    red_reports: BTreeMap<String, u64>,
    triage_reports: u64,
    sink: E,
}

impl<E: EventSink> Pipeline<E> {
    pub fn new(cfg: PipelineConfig, profiles: &[PatientProfile], sink: E) -> Result<Self> {
        let epoch_ms = anomaly::epoch_ms(cfg.epoch_s)?;
        if !(cfg.feature_timeout_s.is_finite() && cfg.feature_timeout_s > 0.0) {
            return Err(crate::Error::validation("feature timeout must be positive"));
        }
        Ok(Pipeline {
            steps: StepConfig {
                ranges: cfg.ranges,
                reliabilities: cfg.reliabilities,
            },
            models_dir: cfg.models_dir,
            feature_timeout_s: cfg.feature_timeout_s,
            epoch_ms,
            ages: profiles
                .iter()
                .map(|p| (p.patient_id.clone(), p.age_years))
                .collect(),
            patients: BTreeMap::new(),
            unstructured: 0,
            red_reports: BTreeMap::new(),
            triage_reports: 0,
            sink,
        })
    }

    pub fn sink(&self) -> &E {
        &self.sink
    }

    pub fn sink_mut(&mut self) -> &mut E {
        &mut self.sink
    }

    /// Set the age used for `patient_id`. Only patients not seen yet are affected.
    pub fn set_age(&mut self, patient_id: &str, age_years: u32) -> Result<()> {
        PatientProfile::new(patient_id, age_years)?;
        self.ages.insert(patient_id.to_string(), age_years);
        Ok(())
    }

    pub fn into_sink(self) -> E {
        self.sink
    }

    /// Most recent triage report per patient, in patient order.
    pub fn latest(&self) -> impl Iterator<Item = &TriageReport> {
        self.patients.values().filter_map(|p| p.latest.as_ref())
    }

    fn ensure_patient(&mut self, id: &str) {
        if !self.patients.contains_key(id) {
            let age = self.ages.get(id).copied().unwrap_or(DEFAULT_AGE_YEARS);
            let features = FeatureTrack::new(&self.steps.ranges, age, self.feature_timeout_s)
                .map_err(|e| log::warn!("{id}: feature tracking disabled ({e})"))
                .ok();
            let forecasters = VitalKind::ALL
                .iter()
                .map(|k| Forecaster::load(self.models_dir.as_deref(), id, *k))
                .collect();
            self.patients.insert(
                id.to_string(),
                PatientState {
                    id: id.to_string(),
                    age,
                    cleaner: Cleaner::new(),
                    open: None,
                    prev_status: None,
                    pending: None,
                    last_good: [None; 5],
                    features,
                    forecasters,
                    late_samples: 0,
                    epochs: 0,
                    latest: None,
                },
            );
        }
    }

    pub fn push(&mut self, sample: VitalSample) -> Result<()> {
        let epoch_ms = self.epoch_ms;
        self.ensure_patient(&sample.patient_id);
        let cfg = &self.steps;
        let p = self.patients.get_mut(&sample.patient_id).expect("ensured");
        if p.cleaner.check(&sample) != Verdict::Accept {
            return Ok(());
        }
        let epoch = sample.ts_ms.div_euclid(epoch_ms);
        let mut out = Vec::new();
        let mut closed = None;
        match &mut p.open {
            Some((e, _)) if epoch < *e => {
                p.late_samples += 1;
                log::debug!("{}: late sample for closed epoch dropped from the grid", p.id);
            }
            Some((e, cells)) if epoch == *e => put(cells, &sample),
            open => {
                closed = open.take();
                let mut cells = [None; 6];
                put(&mut cells, &sample);
                *open = Some((epoch, cells));
            }
        }
        out.push(Event::Sample(sample));
        if let Some((e, cells)) = closed {
            close_epoch(p, cfg, e * epoch_ms, cells, &mut out)?;
        }
        self.emit_all(out)
    }

    /// Close every open epoch and emit the per-patient clean reports.
    pub fn finish(&mut self, ingest: &IngestStats) -> Result<RunSummary> {
        let cfg = &self.steps;
        let epoch_ms = self.epoch_ms;
        let mut out = Vec::new();
        for p in self.patients.values_mut() {
            if let Some((e, cells)) = p.open.take() {
                close_epoch(p, cfg, e * epoch_ms, cells, &mut out)?;
            }
            if let Some(row) = p.pending.take() {
                let prev = p.prev_status.take();
                finish_row(p, cfg, row, prev.as_ref(), None, &mut out)?;
            }
            out.push(Event::CleanReport(PatientCleanReport {
                patient_id: p.id.clone(),
                report: p.cleaner.report(),
            }));
        }
        self.emit_all(out)?;
        self.sink.flush()?;

        let mut clean = CleanReport {
            rejected_unstructured: self.unstructured,
            ..CleanReport::default()
        };
        let mut patients = BTreeMap::new();
        let mut late = 0;
        for p in self.patients.values() {
            clean.merge(&p.cleaner.report());
            late += p.late_samples;
            patients.insert(
                p.id.clone(),
                PatientSummary {
                    epochs: p.epochs,
                    late_samples: p.late_samples,
                    latest_risk: p.latest.as_ref().map(|r| r.risk),
                    red_reports: self.red_reports.get(&p.id).copied().unwrap_or(0),
                },
            );
        }
        let sample_drops = clean.drops() - clean.rejected_unstructured;
        Ok(RunSummary {
            conservation_ok: ingest.samples_accepted.checked_sub(sample_drops) == Some(clean.accepted)
                && ingest.parse_failures == clean.rejected_unstructured,
            ingest: ingest.clone(),
            clean,
            triage_reports: self.triage_reports,
            late_samples: late,
            patients,
        })
    }

    fn emit_all(&mut self, events: Vec<Event>) -> Result<()> {
        for ev in &events {
            if let Event::Triage(t) = ev {
                self.triage_reports += 1;
                if triage::color(t.risk) == triage::Color::Red {
                    *self.red_reports.entry(t.patient_id.clone()).or_insert(0) += 1;
                }
                if let Some(p) = self.patients.get_mut(&t.patient_id) {
                    p.latest = Some(t.clone());
                }
            }
            self.sink.emit(ev)?;
        }
        Ok(())
    }
}

impl<E: EventSink> SampleSink for Pipeline<E> {
    fn accept(&mut self, sample: VitalSample) -> Result<()> {
        self.push(sample)
    }

    fn parse_failure(&mut self) {
        self.unstructured += 1;
    }
}

/// The parts of the configuration the per-epoch steps read.
struct StepConfig {
    ranges: NormalRanges,
    reliabilities: [f64; 5],
}

fn put(cells: &mut [Option<(i64, u64, f64)>; 6], s: &VitalSample) {
    let cell = &mut cells[s.kind.index()];
    if cell.map_or(true, |(ts, seq, _)| (s.ts_ms, s.seq) >= (ts, seq)) {
        *cell = Some((s.ts_ms, s.seq, s.value));
    }
}

/// Turn a finished epoch into a row; the row before it now has both
/// neighbours and can be labelled.
fn close_epoch(
    p: &mut PatientState,
    cfg: &StepConfig,
    ts_ms: i64,
    cells: [Option<(i64, u64, f64)>; 6],
    out: &mut Vec<Event>,
) -> Result<()> {
    let record = Record {
        ts_ms,
        values: cells.map(|c| c.map(|(_, _, v)| v)),
    };
    let status = anomaly::record_status(&record, &cfg.ranges, p.age)?;
    let bands = anomaly::record_bands(&record, &cfg.ranges, p.age)?;
    let row = ClosedRow {
        record,
        status,
        bands,
    };
    if let Some(prev_row) = p.pending.replace(row) {
        let next = p.pending.as_ref().map(|r| r.status);
        let prev = p.prev_status.replace(prev_row.status);
        finish_row(p, cfg, prev_row, prev.as_ref(), next.as_ref(), out)?;
    }
    Ok(())
}

fn finish_row(
    p: &mut PatientState,
    cfg: &StepConfig,
    row: ClosedRow,
    prev: Option<&StatusRow>,
    next: Option<&StatusRow>,
    out: &mut Vec<Event>,
) -> Result<()> {
    p.epochs += 1;
    let labels: LabelRow = anomaly::classify_row(prev, &row.status, next);
    let flag: RowFlag = anomaly::row_flag(&labels, &row.bands);

    // Values of groups labelled as reading errors are not trusted.
    let mut trusted = row.record.values;
    for g in VitalGroup::ALL {
        match labels[g.index()] {
            Some(AnomalyLabel::ReadingError) => {
                for k in g.kinds() {
                    trusted[k.index()] = None;
                }
            }
            Some(_) => p.last_good[g.index()] = row.bands[g.index()],
            None => {}
        }
    }

    let feature_check = match &mut p.features {
        Some(track) => track.observe(
            row.record.ts_ms,
            trusted[VitalKind::HeartRate.index()],
            trusted[VitalKind::RespiratoryRate.index()],
        )?,
        None => None,
    };
    out.push(Event::Anomaly(AnomalyFlags {
        patient_id: p.id.clone(),
        ts_ms: row.record.ts_ms,
        labels,
        flag,
        feature_check,
    }));

    for kind in VitalKind::ALL {
        if let Some(v) = trusted[kind.index()] {
            p.forecasters[kind.index()].observe(v);
        }
    }
    let predicted_values: [Option<f64>; 6] =
        VitalKind::ALL.map(|k| p.forecasters[k.index()].predict().filter(|x| x.is_finite()));
    let mut predicted = BandedVitals::all_normal();
    for g in VitalGroup::ALL {
        if let Some(b) = cfg.ranges.group_band(g, &predicted_values, p.age)? {
            predicted.set(g, b);
        }
    }

    let mut bands = BandedVitals::all_normal();
    for g in VitalGroup::ALL {
        if let Some(b) = p.last_good[g.index()] {
            bands.set(g, b);
        }
    }
    let report = triage::report(&p.id, row.record.ts_ms, bands, Some(predicted), &cfg.reliabilities);
    out.push(Event::Triage(report));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(kind: VitalKind, t_s: i64, value: f64, seq: u64) -> VitalSample {
        VitalSample {
            patient_id: "p".into(),
            kind,
            ts_ms: t_s * 1000,
            value,
            seq,
        }
    }

    fn run(samples: Vec<VitalSample>) -> (Vec<Event>, RunSummary) {
        run_aged(samples, 30)
    }

    fn run_aged(samples: Vec<VitalSample>, age: u32) -> (Vec<Event>, RunSummary) {
        let profiles = [PatientProfile::new("p", age).unwrap()];
        let mut pl = Pipeline::new(PipelineConfig::default(), &profiles, Vec::new()).unwrap();
        let mut stats = IngestStats::default();
        for x in samples {
            stats.samples_accepted += 1;
            pl.push(x).unwrap();
        }
        let summary = pl.finish(&stats).unwrap();
        (pl.into_sink(), summary)
    }

    fn triages(events: &[Event]) -> Vec<&TriageReport> {
        events
            .iter()
            .filter_map(|e| match e {
                Event::Triage(t) => Some(t),
                _ => None,
            })
            .collect()
    }

    #[test]
    fn one_report_per_epoch() {
        let mut v = Vec::new();
        for i in 0..5 {
            v.push(s(VitalKind::HeartRate, i * 60, 72.0, i as u64));
        }
        let (events, summary) = run(v);
        let t = triages(&events);
        assert_eq!(t.len(), 5);
        assert!(t.iter().all(|r| r.risk == RiskLevel::Low));
        assert_eq!(summary.triage_reports, 5);
        assert!(summary.conservation_ok);
        assert!(matches!(events.last(), Some(Event::CleanReport(_))));
    }

    #[test]
    fn isolated_spike_is_reading_error_and_ignored() {
        let mut v = Vec::new();
        for i in 0..5 {
            let hr = if i == 2 { 120.0 } else { 72.0 };
            v.push(s(VitalKind::HeartRate, i * 60, hr, i as u64));
        }
        let (events, _) = run(v);
        let flags: Vec<_> = events
            .iter()
            .filter_map(|e| match e {
                Event::Anomaly(a) => Some(a),
                _ => None,
            })
            .collect();
        assert_eq!(flags[2].labels[VitalGroup::Heart.index()], Some(AnomalyLabel::ReadingError));
        assert!(triages(&events).iter().all(|r| r.bands.heart == Band::Normal));
    }

    #[test]
    fn sustained_fever_turns_red() {
        let mut v = Vec::new();
        for i in 0..6 {
            v.push(s(VitalKind::BodyTemperature, i * 60, 39.5, 2 * i as u64));
            v.push(s(VitalKind::RespiratoryRate, i * 60 + 1, 5.0, 2 * i as u64 + 1));
        }
        // Respiratory range at 22 is [18, 20]: 5 breaths/min bands Lowest.
        let (events, summary) = run_aged(v, 22);
        let t = triages(&events);
        assert!(t.iter().all(|r| r.matched_row == Some(2)));
        assert!(t.iter().all(|r| triage::color(r.risk) == triage::Color::Red));
        assert_eq!(summary.patients["p"].red_reports, 6);
    }

    #[test]
    fn late_and_duplicate_samples() {
        let v = vec![
            s(VitalKind::HeartRate, 0, 72.0, 0),
            s(VitalKind::HeartRate, 120, 72.0, 1),
            s(VitalKind::HeartRate, 120, 72.0, 1),
            s(VitalKind::HeartRate, 30, 72.0, 2),
        ];
        let (_, summary) = run(v);
        assert_eq!(summary.late_samples, 1);
        assert_eq!(summary.clean.dropped_duplicates, 1);
        assert_eq!(summary.clean.accepted, 3);
        assert!(summary.conservation_ok);
    }
}
