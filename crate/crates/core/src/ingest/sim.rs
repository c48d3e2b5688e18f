//! Seeded patient-sensor simulator.
//!
//! Each patient gets a per-kind baseline (the middle of the age-specific
//! normal interval, noise sigma a fixed fraction of its width) and a fixed
//! sampling period per kind. Injections add a shaped offset measured in
//! range widths. Output is ordered by timestamp, then patient, then kind.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{NormalRanges, PatientProfile, VitalKind, VitalSample, MAX_AGE_YEARS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// Triangle peaking at the middle of the window.
    Spike,
    /// Linear rise from zero to full magnitude at the end of the window.
    Ramp,
    /// Full magnitude over the whole window.
    Plateau,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub patient: String,
    pub kind: VitalKind,
    pub start_s: f64,
    pub duration_s: f64,
    pub shape: Shape,
    /// Signed offset in normal-range widths; negative pushes below range.
    pub magnitude: f64,
}

impl Injection {
    /// Offset in range widths at `t_s` seconds into the scenario.
    pub fn offset_at(&self, t_s: f64) -> f64 {
        if t_s < self.start_s || t_s > self.start_s + self.duration_s {
            return 0.0;
        }
        let frac = if self.duration_s > 0.0 {
            (t_s - self.start_s) / self.duration_s
        } else {
            0.5
        };
        let scale = match self.shape {
            Shape::Plateau => 1.0,
            Shape::Ramp => frac,
            Shape::Spike => 1.0 - (2.0 * frac - 1.0).abs(),
        };
        self.magnitude * scale
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BaselineOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

fn default_start_ms() -> i64 {
    1_700_000_000_000
}

fn default_sigma_fraction() -> f64 {
    0.05
}

fn default_periods() -> BTreeMap<VitalKind, f64> {
    BTreeMap::from([
        (VitalKind::HeartRate, 15.0),
        (VitalKind::RespiratoryRate, 15.0),
        (VitalKind::BloodPressureSystolic, 30.0),
        (VitalKind::BloodPressureDiastolic, 30.0),
        (VitalKind::BodyTemperature, 30.0),
        (VitalKind::BloodPh, 60.0),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub patient_count: usize,
    pub duration_s: i64,
    #[serde(default = "default_start_ms")]
    pub start_ms: i64,
    /// Sampling period per kind; kinds left out use the defaults.
    #[serde(default)]
    pub sample_period_s: BTreeMap<VitalKind, f64>,
    #[serde(default)]
    pub baseline: BTreeMap<VitalKind, BaselineOverride>,
    /// Default noise sigma as a fraction of the normal-range width.
    #[serde(default = "default_sigma_fraction")]
    pub sigma_fraction: f64,
    /// Ages by patient index; missing entries get a seed-independent default.
    #[serde(default)]
    pub ages: Vec<u32>,
    #[serde(default)]
    pub injections: Vec<Injection>,
    pub rng_seed: u64,
}

pub fn patient_id(index: usize) -> String {
    format!("p-{:03}", index + 1)
}

/// Deterministic spread of adult ages.
fn default_age(index: usize) -> u32 {
    20 + ((index * 13) % 60) as u32
}

impl ScenarioSpec {
    pub fn new(patient_count: usize, duration_s: i64, rng_seed: u64) -> Self {
        ScenarioSpec {
            patient_count,
            duration_s,
            start_ms: default_start_ms(),
            sample_period_s: BTreeMap::new(),
            baseline: BTreeMap::new(),
            sigma_fraction: default_sigma_fraction(),
            ages: Vec::new(),
            injections: Vec::new(),
            rng_seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn period(&self, kind: VitalKind) -> f64 {
        self.sample_period_s
            .get(&kind)
            .copied()
            .unwrap_or_else(|| default_periods()[&kind])
    }

    pub fn age(&self, index: usize) -> u32 {
        self.ages.get(index).copied().unwrap_or_else(|| default_age(index))
    }

    pub fn profiles(&self) -> Vec<PatientProfile> {
        (0..self.patient_count)
            .map(|i| PatientProfile {
                patient_id: patient_id(i),
                age_years: self.age(i),
                height_cm: None,
                weight_kg: None,
                sex: None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.patient_count == 0 {
            return Err(Error::validation("patient_count must be at least 1"));
        }
        if self.duration_s <= 0 {
            return Err(Error::validation(format!(
                "duration_s must be positive, got {}",
                self.duration_s
            )));
        }
        for kind in VitalKind::ALL {
            let p = self.period(kind);
            if !(p.is_finite() && p > 0.0) {
                return Err(Error::validation(format!("sample period for {kind} must be positive")));
            }
        }
        if !(self.sigma_fraction.is_finite() && self.sigma_fraction >= 0.0) {
            return Err(Error::validation("sigma_fraction must be non-negative"));
        }
        for (kind, b) in &self.baseline {
            if b.mean.is_some_and(|m| !m.is_finite()) || b.sigma.is_some_and(|s| !(s.is_finite() && s >= 0.0)) {
                return Err(Error::validation(format!("invalid baseline for {kind}")));
            }
        }
        if let Some(a) = self.ages.iter().find(|a| **a > MAX_AGE_YEARS) {
            return Err(Error::validation(format!("age {a} exceeds {MAX_AGE_YEARS}")));
        }
        let ids: Vec<String> = (0..self.patient_count).map(patient_id).collect();
        for inj in &self.injections {
            if !ids.contains(&inj.patient) {
                return Err(Error::validation(format!("injection for unknown patient {}", inj.patient)));
            }
            if !inj.magnitude.is_finite() {
                return Err(Error::validation("injection magnitude must be finite"));
            }
            let end = inj.start_s + inj.duration_s;
            if !(inj.start_s >= 0.0 && inj.duration_s >= 0.0 && end <= self.duration_s as f64) {
                return Err(Error::validation(format!(
                    "injection window [{}, {end}] outside [0, {}]",
                    inj.start_s, self.duration_s
                )));
            }
        }
        Ok(())
    }
}

/// Generate the full sample stream. A pure function of the spec.
pub fn simulate(spec: &ScenarioSpec) -> Result<Vec<VitalSample>> {
    simulate_with_ranges(spec, &NormalRanges::default())
}

pub fn simulate_with_ranges(spec: &ScenarioSpec, ranges: &NormalRanges) -> Result<Vec<VitalSample>> {
    spec.validate()?;
    let duration_ms = spec.duration_s * 1000;

    // (ts offset ms, patient, kind)
    let mut events: Vec<(i64, usize, VitalKind)> = Vec::new();
    for p in 0..spec.patient_count {
        for kind in VitalKind::ALL {
            let period_ms = spec.period(kind) * 1000.0;
            let mut i = 0u64;
            loop {
                let t = (i as f64 * period_ms).round() as i64;
                if t >= duration_ms {
                    break;
                }
                events.push((t, p, kind));
                i += 1;
            }
        }
    }
    events.sort_unstable();

    struct Channel {
        mean: f64,
        sigma: f64,
        width: f64,
        seq: u64,
    }
    let mut channels: Vec<Vec<Channel>> = Vec::with_capacity(spec.patient_count);
    for p in 0..spec.patient_count {
        let age = spec.age(p);
        let mut per_kind = Vec::with_capacity(6);
        for kind in VitalKind::ALL {
            let iv = ranges.normal_range(kind, age)?;
            let ov = spec.baseline.get(&kind).cloned().unwrap_or_default();
            per_kind.push(Channel {
                mean: ov.mean.unwrap_or_else(|| iv.mid()),
                sigma: ov.sigma.unwrap_or(spec.sigma_fraction * iv.width()),
                width: iv.width(),
                seq: 0,
            });
        }
        channels.push(per_kind);
    }

    let ids: Vec<String> = (0..spec.patient_count).map(patient_id).collect();
    let mut injections: Vec<Vec<&Injection>> = vec![Vec::new(); spec.patient_count];
    for inj in &spec.injections {
        let p = ids.iter().position(|id| *id == inj.patient).expect("validated");
        injections[p].push(inj);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let mut out = Vec::with_capacity(events.len());
    for (t, p, kind) in events {
        let ch = &mut channels[p][kind.index()];
        let t_s = t as f64 / 1000.0;
        let offset: f64 = injections[p]
            .iter()
            .filter(|inj| inj.kind == kind)
            .map(|inj| inj.offset_at(t_s))
            .sum();
        let z: f64 = StandardNormal.sample(&mut rng);
        let value = ch.mean + offset * ch.width + ch.sigma * z;
        out.push(VitalSample {
            patient_id: ids[p].clone(),
            kind,
            ts_ms: spec.start_ms + t,
            value,
            seq: ch.seq,
        });
        ch.seq += 1;
    }
    Ok(out)
}
