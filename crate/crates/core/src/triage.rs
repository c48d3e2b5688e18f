//! Risk classification, decision recommendations and display color.
//!
//! Band patterns that appear in the rule table are looked up exactly. Every
//! other pattern is resolved by fusing one mass function per parameter.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::fusion::{self, BeliefInterval, MassFunction};
use crate::model::{Band, BandedVitals, RiskLevel, VitalGroup};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleRow {
    pub pattern: BandedVitals,
    pub risk: RiskLevel,
}

const fn rule(
    respiratory: Band,
    blood_ph: Band,
    heart: Band,
    blood_pressure: Band,
    temperature: Band,
    risk: RiskLevel,
) -> RuleRow {
    RuleRow {
        pattern: BandedVitals::new(respiratory, blood_ph, heart, blood_pressure, temperature),
        risk,
    }
}

use Band::{High as H, Highest as HH, Low as L, Lowest as LL, Medium as M, Normal as N};

/// The fifteen printed risk rules, in table order.
pub const RULE_TABLE: [RuleRow; 15] = [
    rule(L, N, N, N, H, RiskLevel::High),
    rule(LL, N, N, N, HH, RiskLevel::High),
    rule(M, N, N, N, M, RiskLevel::Medium),
    rule(H, N, N, N, N, RiskLevel::Low),
    rule(N, H, H, H, H, RiskLevel::High),
    rule(N, H, N, H, M, RiskLevel::High),
    rule(H, H, N, H, HH, RiskLevel::Highest),
    rule(M, M, M, M, M, RiskLevel::Medium),
    rule(M, M, L, H, N, RiskLevel::Medium),
    rule(H, N, M, M, N, RiskLevel::Medium),
    rule(L, L, N, L, H, RiskLevel::High),
    rule(LL, LL, H, L, HH, RiskLevel::Highest),
    rule(N, LL, H, N, H, RiskLevel::High),
    rule(N, N, N, H, M, RiskLevel::Medium),
    rule(N, N, M, LL, N, RiskLevel::Medium),
];

/// 1-based row number of an exact pattern match.
pub fn lookup(bands: &BandedVitals) -> Option<usize> {
    RULE_TABLE
        .iter()
        .position(|r| r.pattern == *bands)
        .map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriagePath {
    RuleTable,
    DsFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub risk: RiskLevel,
    pub path: TriagePath,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub belief_interval: Option<BeliefInterval>,
    /// Conflict mass of the final fused combination step sequence, if fusion ran.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conflict: Option<f64>,
}

/// Risk from the rule table, or from evidence fusion when the pattern is not
/// listed. Fusion that reaches `High` is promoted to `Highest` when any band
/// is extreme. Irreconcilable evidence yields `High` (or `Highest`) with no
/// belief interval.
///
/// The fused risk of a pattern is never below the fused risk of any pattern
/// it dominates band by band. Plain Dempster voting can rank a pattern with
/// one more `Medium` reading below its milder neighbour (extra `{Medium}`
/// evidence outvotes `{High}`), so the fallback reports the most severe
/// decision over the pattern's down-set.
pub fn classify(bands: &BandedVitals, reliabilities: &[f64; 5]) -> Classification {
    if let Some(row) = lookup(bands) {
        return Classification {
            risk: RULE_TABLE[row - 1].risk,
            path: TriagePath::RuleTable,
            matched_row: Some(row),
            belief_interval: None,
            conflict: None,
        };
    }
    let mut memo = HashMap::new();
    let risk = envelope(bands.to_array(), reliabilities, &mut memo);
    let (belief_interval, conflict) = match fuse(bands, reliabilities) {
        Ok((m, conflict)) => {
            let idx = match risk {
                RiskLevel::Low => 0,
                RiskLevel::Medium => 1,
                RiskLevel::High | RiskLevel::Highest => 2,
            };
            let frame = m.frame().clone();
            (m.uncertainty(frame.singleton(idx)).ok(), Some(conflict))
        }
        Err(_) => (None, Some(1.0)),
    };
    Classification {
        risk,
        path: TriagePath::DsFallback,
        matched_row: None,
        belief_interval,
        conflict,
    }
}

/// Fused decision for one pattern, before taking the down-set maximum.
fn fused_risk(bands: &BandedVitals, reliabilities: &[f64; 5]) -> RiskLevel {
    let risk = match fuse(bands, reliabilities) {
        Ok((m, _)) => fusion::decide(&m).expect("risk frame").0,
        Err(_) => RiskLevel::High,
    };
    if risk == RiskLevel::High && bands.to_array().iter().any(|b| b.is_extreme()) {
        RiskLevel::Highest
    } else {
        risk
    }
}

/// One step toward `Normal` on the band's own side.
fn milder(b: Band) -> Option<Band> {
    match b {
        Band::Normal => None,
        Band::Medium => Some(Band::Normal),
        Band::Low | Band::High => Some(Band::Medium),
        Band::Lowest => Some(Band::Low),
        Band::Highest => Some(Band::High),
    }
}

fn envelope(
    bands: [Band; 5],
    reliabilities: &[f64; 5],
    memo: &mut HashMap<[Band; 5], RiskLevel>,
) -> RiskLevel {
    if let Some(r) = memo.get(&bands) {
        return *r;
    }
    let mut risk = fused_risk(&BandedVitals::from_array(bands), reliabilities);
    for i in 0..5 {
        if risk == RiskLevel::Highest {
            break;
        }
        if let Some(b) = milder(bands[i]) {
            let mut below = bands;
            below[i] = b;
            risk = risk.max(envelope(below, reliabilities, memo));
        }
    }
    memo.insert(bands, risk);
    risk
}

/// Fused evidence of all five parameters and the largest single-step conflict.
pub fn fuse(bands: &BandedVitals, reliabilities: &[f64; 5]) -> crate::Result<(MassFunction, f64)> {
    let mut acc: Option<MassFunction> = None;
    let mut max_conflict = 0.0f64;
    for (i, group) in VitalGroup::ALL.into_iter().enumerate() {
        let m = fusion::vital_to_mass(group, bands.get(group), reliabilities[i])?;
        acc = Some(match acc {
            None => m,
            Some(prev) => {
                let (next, k) = prev.combine_with_conflict(&m).map_err(|e| match e {
                    Error::Conflict { conflict, .. } => Error::Conflict {
                        left: i - 1,
                        right: i,
                        conflict,
                    },
                    other => other,
                })?;
                max_conflict = max_conflict.max(k);
                next
            }
        });
    }
    Ok((acc.expect("five groups"), max_conflict))
}

/// Decision text per (risk row, parameter), rows High, Medium, Low and
/// columns in parameter order.
pub const DECISIONS: [[&str; 5]; 3] = [
    [
        "Must put a patient on ventilator and requires making lung CT",
        "Should to Take medicine and follow the Blood acidity",
        "Taking medicine with Antiviral or Anti-malaria",
        "Taking medicine with Antiviral or Anti-malaria",
        "Taking Antipyretic",
    ],
    [
        "Must record to avoid reaching the high-risk level",
        "Follow Acidity",
        "Taking medicine",
        "Taking medicine",
        "Taking Antipyretic and observing it continuously",
    ],
    [
        "Reassured case",
        "Stable case",
        "Follow the heart pulse rate",
        "Follow the stable case",
        "Follow the stable case",
    ],
];

pub fn decision_text(risk: RiskLevel, group: VitalGroup) -> &'static str {
    let row = match risk {
        RiskLevel::Highest | RiskLevel::High => 0,
        RiskLevel::Medium => 1,
        RiskLevel::Low => 2,
    };
    DECISIONS[row][group.index()]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recommendation {
    pub vital: VitalGroup,
    pub text: String,
    /// Set for `Highest` risk, which reuses the high-risk decisions.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub escalate: bool,
}

/// One recommendation per contributing parameter. A low-risk patient with
/// nothing abnormal gets the low-risk entry for every parameter.
pub fn recommend(risk: RiskLevel, contributing: &[VitalGroup]) -> Vec<Recommendation> {
    let escalate = risk == RiskLevel::Highest;
    let mut groups: Vec<VitalGroup> = contributing.to_vec();
    groups.sort();
    groups.dedup();
    if groups.is_empty() && risk == RiskLevel::Low {
        groups = VitalGroup::ALL.to_vec();
    }
    groups
        .into_iter()
        .map(|g| Recommendation {
            vital: g,
            text: decision_text(risk, g).to_string(),
            escalate,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Color {
    Red,
    Yellow,
    Green,
}

impl Color {
    pub fn ansi(self) -> &'static str {
        match self {
            Color::Red => "\x1b[31m",
            Color::Yellow => "\x1b[33m",
            Color::Green => "\x1b[32m",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Yellow => "yellow",
            Color::Green => "green",
        }
    }
}

pub fn color(risk: RiskLevel) -> Color {
    match risk {
        RiskLevel::High | RiskLevel::Highest => Color::Red,
        RiskLevel::Medium => Color::Yellow,
        RiskLevel::Low => Color::Green,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedRisk {
    pub bands: BandedVitals,
    pub risk: RiskLevel,
    pub path: TriagePath,
}

/// One triage line per (patient, epoch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriageReport {
    pub patient_id: String,
    pub ts_ms: i64,
    pub bands: BandedVitals,
    pub risk: RiskLevel,
    pub path: TriagePath,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_row: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub belief_interval: Option<BeliefInterval>,
    pub recommendations: Vec<Recommendation>,
    pub color: Color,
    pub contributing: Vec<VitalGroup>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<PredictedRisk>,
}

/// Assemble the report for one epoch from its bands and, when available,
/// the bands of the forecast next-epoch readings.
pub fn report(
    patient_id: &str,
    ts_ms: i64,
    bands: BandedVitals,
    predicted_bands: Option<BandedVitals>,
    reliabilities: &[f64; 5],
) -> TriageReport {
    let c = classify(&bands, reliabilities);
    let contributing = bands.contributing();
    let recommendations = recommend(c.risk, &contributing);
    let predicted = predicted_bands.map(|pb| {
        let pc = classify(&pb, reliabilities);
        PredictedRisk {
            bands: pb,
            risk: pc.risk,
            path: pc.path,
        }
    });
    TriageReport {
        patient_id: patient_id.to_string(),
        ts_ms,
        bands,
        risk: c.risk,
        path: c.path,
        matched_row: c.matched_row,
        belief_interval: c.belief_interval,
        recommendations,
        color: color(c.risk),
        contributing,
        predicted,
    }
}
