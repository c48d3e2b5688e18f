//! C ABI over the vitalfuse engine.
//!
//! Every fallible function returns a [`VfStatus`]; on failure a message is
//! available from [`vf_last_error`] on the same thread. Objects are opaque
//! handles created by `*_new`/`*_from_*` functions and released with the
//! matching `*_free`. Strings returned through out-parameters are owned by
//! the caller and released with [`vf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::OnceLock;

use vitalfuse::eventlog::Event;
use vitalfuse::fusion::{FocalSet, MassFunction};
use vitalfuse::ingest::IngestStats;
use vitalfuse::model::{Band, BandedVitals, RiskLevel, VitalKind};
use vitalfuse::pipeline::{Pipeline, PipelineConfig};
use vitalfuse::triage::{self, TriagePath};
use vitalfuse::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Conflict = 3,
    Parse = 4,
    Io = 5,
    Internal = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfKind {
    HeartRate = 0,
    RespiratoryRate = 1,
    BpSystolic = 2,
    BpDiastolic = 3,
    BodyTemperature = 4,
    BloodPh = 5,
}

/// Parameter groups in rule-table column order.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfGroup {
    Respiratory = 0,
    BloodPh = 1,
    Heart = 2,
    BloodPressure = 3,
    Temperature = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfBand {
    Lowest = 0,
    Low = 1,
    Normal = 2,
    Medium = 3,
    High = 4,
    Highest = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VfRisk {
    Low = 0,
    Medium = 1,
    High = 2,
    Highest = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VfClassification {
    pub risk: VfRisk,
    /// 0 for the rule table, 1 for evidence fusion.
    pub fused: u8,
    /// 1-based rule-table row, 0 when fusion decided.
    pub matched_row: u32,
    /// 1 when `support`, `plausibility` and `uncertainty` are set.
    pub has_interval: u8,
    pub support: f64,
    pub plausibility: f64,
    pub uncertainty: f64,
    /// Largest pairwise conflict seen during fusion; 0 for table matches.
    pub conflict: f64,
}

/// Opaque mass function.
pub struct VfMass(MassFunction);

/// Opaque streaming engine.
pub struct VfEngine {
    pipeline: Pipeline<Vec<Event>>,
    stats: IngestStats,
    cursor: usize,
    finished: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(err: &Error) -> VfStatus {
    match err {
        Error::Validation(_) => VfStatus::InvalidArgument,
        Error::Parse { .. } | Error::Json(_) => VfStatus::Parse,
        Error::Conflict { .. } => VfStatus::Conflict,
        Error::Io(_) => VfStatus::Io,
        Error::Numerical(_) => VfStatus::Internal,
    }
}

fn fail(status: VfStatus, msg: impl Into<String>) -> VfStatus {
    set_error(msg);
    status
}

fn from_err(err: Error) -> VfStatus {
    let s = status_of(&err);
    fail(s, err.to_string())
}

/// Run `f`, turning panics into `Internal`.
fn guard(f: impl FnOnce() -> VfStatus) -> VfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(VfStatus::Internal, "internal panic"),
    }
}

macro_rules! not_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(VfStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, VfStatus> {
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(VfStatus::InvalidArgument, "string is not UTF-8"))
}

fn owned_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

// Enumerations arrive as plain integers so that an out-of-range value from
// C is reported instead of being undefined behaviour.
fn kind_of(k: u32) -> Result<VitalKind, VfStatus> {
    VitalKind::ALL
        .get(k as usize)
        .copied()
        .ok_or_else(|| fail(VfStatus::InvalidArgument, format!("kind {k} out of range")))
}

fn band_to_c(b: Band) -> VfBand {
    match b {
        Band::Lowest => VfBand::Lowest,
        Band::Low => VfBand::Low,
        Band::Normal => VfBand::Normal,
        Band::Medium => VfBand::Medium,
        Band::High => VfBand::High,
        Band::Highest => VfBand::Highest,
    }
}

fn band_from_c(b: u32) -> Option<Band> {
    Band::ALL.get(b as usize).copied()
}

fn risk_to_c(r: RiskLevel) -> VfRisk {
    match r {
        RiskLevel::Low => VfRisk::Low,
        RiskLevel::Medium => VfRisk::Medium,
        RiskLevel::High => VfRisk::High,
        RiskLevel::Highest => VfRisk::Highest,
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn vf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn vf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Default normal range of `kind` (a `VfKind`) for a patient of `age_years`.
///
/// # Safety
/// `lo` and `hi` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_normal_range(kind: u32, age_years: u32, lo: *mut f64, hi: *mut f64) -> VfStatus {
    guard(|| {
        not_null!(lo, hi);
        let kind = match kind_of(kind) {
            Ok(k) => k,
            Err(s) => return s,
        };
        match vitalfuse::model::normal_range(kind, age_years) {
            Ok(iv) => {
                *lo = iv.lo;
                *hi = iv.hi;
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Band of a reading of `kind` (a `VfKind`) against the default ranges.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_band(kind: u32, value: f64, age_years: u32, out: *mut VfBand) -> VfStatus {
    guard(|| {
        not_null!(out);
        let kind = match kind_of(kind) {
            Ok(k) => k,
            Err(s) => return s,
        };
        match vitalfuse::model::band(kind, value, age_years) {
            Ok(b) => {
                *out = band_to_c(b);
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Classify five bands given in group order. `reliabilities` may be null
/// for the defaults, otherwise it points at five values in (0, 1].
///
/// # Safety
/// `bands` must point at five readable `VfBand` values, `reliabilities` at
/// five doubles or be null, and `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_classify(
    bands: *const VfBand,
    reliabilities: *const f64,
    out: *mut VfClassification,
) -> VfStatus {
    guard(|| {
        not_null!(bands, out);
        // Read as integers so an out-of-range value from C is caught, not UB.
        let raw = std::slice::from_raw_parts(bands.cast::<u32>(), 5);
        let mut b = [Band::Normal; 5];
        for (i, v) in raw.iter().enumerate() {
            match band_from_c(*v) {
                Some(x) => b[i] = x,
                None => return fail(VfStatus::InvalidArgument, format!("band {v} out of range")),
            }
        }
        let rel: [f64; 5] = if reliabilities.is_null() {
            [vitalfuse::config::DEFAULT_RELIABILITY; 5]
        } else {
            let r = std::slice::from_raw_parts(reliabilities, 5);
            if let Some(x) = r.iter().find(|x| !(**x > 0.0 && **x <= 1.0)) {
                return fail(VfStatus::InvalidArgument, format!("reliability {x} outside (0, 1]"));
            }
            [r[0], r[1], r[2], r[3], r[4]]
        };
        let c = triage::classify(&BandedVitals::from_array(b), &rel);
        *out = VfClassification {
            risk: risk_to_c(c.risk),
            fused: u8::from(c.path == TriagePath::DsFallback),
            matched_row: c.matched_row.map_or(0, |r| r as u32),
            has_interval: u8::from(c.belief_interval.is_some()),
            support: c.belief_interval.map_or(0.0, |i| i.spt),
            plausibility: c.belief_interval.map_or(0.0, |i| i.pls),
            uncertainty: c.belief_interval.map_or(0.0, |i| i.u),
            conflict: c.conflict.unwrap_or(0.0),
        };
        VfStatus::Ok
    })
}

fn recommendation_table() -> &'static [[CString; 5]; 3] {
    static TABLE: OnceLock<[[CString; 5]; 3]> = OnceLock::new();
    TABLE.get_or_init(|| {
        triage::DECISIONS.map(|row| row.map(|t| CString::new(t).expect("no interior NUL")))
    })
}

/// Recommendation text for a `VfRisk` and a `VfGroup`. `VF_RISK_HIGHEST`
/// shares the high-risk texts. The string is static; null for values out
/// of range.
#[no_mangle]
pub extern "C" fn vf_recommendation(risk: u32, group: u32) -> *const c_char {
    let row = match risk {
        r if r == VfRisk::High as u32 || r == VfRisk::Highest as u32 => 0,
        r if r == VfRisk::Medium as u32 => 1,
        r if r == VfRisk::Low as u32 => 2,
        _ => return ptr::null(),
    };
    recommendation_table()[row]
        .get(group as usize)
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Parse a mass function from text such as
/// `"Low,Medium,High | {Low}:0.6 {Low,Medium,High}:0.4"`.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_mass_from_text(text: *const c_char, out: *mut *mut VfMass) -> VfStatus {
    guard(|| {
        not_null!(text, out);
        let t = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match t.parse::<MassFunction>() {
            Ok(m) => {
                *out = Box::into_raw(Box::new(VfMass(m)));
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Dempster combination of `a` and `b`. `conflict` may be null.
///
/// # Safety
/// `a` and `b` must be live handles and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_mass_combine(
    a: *const VfMass,
    b: *const VfMass,
    out: *mut *mut VfMass,
    conflict: *mut f64,
) -> VfStatus {
    guard(|| {
        not_null!(a, b, out);
        match (*a).0.combine_with_conflict(&(*b).0) {
            Ok((m, k)) => {
                if !conflict.is_null() {
                    *conflict = k;
                }
                *out = Box::into_raw(Box::new(VfMass(m)));
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Belief of the set whose bit `i` selects the `i`-th frame label.
///
/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_mass_belief(m: *const VfMass, set: u16, out: *mut f64) -> VfStatus {
    guard(|| {
        not_null!(m, out);
        match (*m).0.belief(FocalSet(set)) {
            Ok(v) => {
                *out = v;
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Plausibility of the set whose bit `i` selects the `i`-th frame label.
///
/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_mass_plausibility(m: *const VfMass, set: u16, out: *mut f64) -> VfStatus {
    guard(|| {
        not_null!(m, out);
        match (*m).0.plausibility(FocalSet(set)) {
            Ok(v) => {
                *out = v;
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Text form of `m`; free the result with [`vf_string_free`].
///
/// # Safety
/// `m` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_mass_to_text(m: *const VfMass, out: *mut *mut c_char) -> VfStatus {
    guard(|| {
        not_null!(m, out);
        *out = owned_string((*m).0.to_text());
        VfStatus::Ok
    })
}

/// # Safety
/// `m` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vf_mass_free(m: *mut VfMass) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Parse one wire line. `patient` may be null; otherwise it receives an
/// owned copy of the patient id.
///
/// # Safety
/// `line` must be a NUL-terminated string; the other pointers must be valid
/// for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_parse_line(
    line: *const c_char,
    kind: *mut VfKind,
    ts_ms: *mut i64,
    value: *mut f64,
    seq: *mut u64,
    patient: *mut *mut c_char,
) -> VfStatus {
    guard(|| {
        not_null!(line, kind, ts_ms, value, seq);
        let text = match str_arg(line) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match vitalfuse::ingest::parse_line(text) {
            Ok(s) => {
                *kind = match s.kind {
                    VitalKind::HeartRate => VfKind::HeartRate,
                    VitalKind::RespiratoryRate => VfKind::RespiratoryRate,
                    VitalKind::BloodPressureSystolic => VfKind::BpSystolic,
                    VitalKind::BloodPressureDiastolic => VfKind::BpDiastolic,
                    VitalKind::BodyTemperature => VfKind::BodyTemperature,
                    VitalKind::BloodPh => VfKind::BloodPh,
                };
                *ts_ms = s.ts_ms;
                *value = s.value;
                *seq = s.seq;
                if !patient.is_null() {
                    *patient = owned_string(s.patient_id);
                }
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Create a streaming engine with default ranges and reliabilities.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_engine_new(epoch_s: f64, out: *mut *mut VfEngine) -> VfStatus {
    guard(|| {
        not_null!(out);
        let cfg = PipelineConfig {
            epoch_s,
            ..PipelineConfig::default()
        };
        match Pipeline::new(cfg, &[], Vec::new()) {
            Ok(pipeline) => {
                *out = Box::into_raw(Box::new(VfEngine {
                    pipeline,
                    stats: IngestStats::default(),
                    cursor: 0,
                    finished: false,
                }));
                VfStatus::Ok
            }
            Err(e) => from_err(e),
        }
    })
}

/// Set a patient's age before its first sample arrives.
///
/// # Safety
/// `engine` must be a live handle and `patient` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vf_engine_set_age(engine: *mut VfEngine, patient: *const c_char, age_years: u32) -> VfStatus {
    guard(|| {
        not_null!(engine, patient);
        let id = match str_arg(patient) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*engine).pipeline.set_age(id, age_years) {
            Ok(()) => VfStatus::Ok,
            Err(e) => from_err(e),
        }
    })
}

/// Feed one wire line. A line that does not parse returns `Parse` and is
/// counted; the engine stays usable.
///
/// # Safety
/// `engine` must be a live handle and `line` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn vf_engine_push_line(engine: *mut VfEngine, line: *const c_char) -> VfStatus {
    guard(|| {
        not_null!(engine, line);
        let e = &mut *engine;
        if e.finished {
            return fail(VfStatus::InvalidArgument, "engine already finished");
        }
        let text = match str_arg(line) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match e.stats.record_line(text) {
            Some(sample) => match e.pipeline.push(sample) {
                Ok(()) => VfStatus::Ok,
                Err(err) => from_err(err),
            },
            None => {
                use vitalfuse::ingest::SampleSink;
                e.pipeline.parse_failure();
                fail(VfStatus::Parse, "line did not parse")
            }
        }
    })
}

/// Close all open epochs. No lines are accepted afterwards.
///
/// # Safety
/// `engine` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn vf_engine_finish(engine: *mut VfEngine) -> VfStatus {
    guard(|| {
        not_null!(engine);
        let e = &mut *engine;
        if e.finished {
            return VfStatus::Ok;
        }
        e.finished = true;
        match e.pipeline.finish(&e.stats) {
            Ok(_) => VfStatus::Ok,
            Err(err) => from_err(err),
        }
    })
}

/// Next pending event as a JSON object, or null in `out` when none is
/// pending. Free the string with [`vf_string_free`].
///
/// # Safety
/// `engine` must be a live handle and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn vf_engine_next_event(engine: *mut VfEngine, out: *mut *mut c_char) -> VfStatus {
    guard(|| {
        not_null!(engine, out);
        let e = &mut *engine;
        let events = e.pipeline.sink_mut();
        if e.cursor >= events.len() {
            events.clear();
            e.cursor = 0;
            *out = ptr::null_mut();
            return VfStatus::Ok;
        }
        let ev = &events[e.cursor];
        e.cursor += 1;
        match serde_json::to_string(ev) {
            Ok(s) => {
                *out = owned_string(s);
                VfStatus::Ok
            }
            Err(err) => from_err(err.into()),
        }
    })
}

/// # Safety
/// `engine` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn vf_engine_free(engine: *mut VfEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use vitalfuse::model::VitalGroup;

    #[test]
    fn group_order_matches_core() {
        for (i, g) in VitalGroup::ALL.iter().enumerate() {
            assert_eq!(g.index(), i);
        }
        assert_eq!(VfGroup::Temperature as usize, VitalGroup::Temperature.index());
        assert_eq!(kind_of(VfKind::BloodPh as u32), Ok(VitalKind::BloodPh));
        assert!(kind_of(6).is_err());
        assert_eq!(band_from_c(VfBand::Highest as u32), Some(Band::Highest));
    }
}
