//! Reference implementations shared by the integration tests. They are
//! written from the stated definitions, independently of the library code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use vitalfuse::anomaly::{AnomalyLabel, Record, RecordGrid};
use vitalfuse::fusion::{FocalSet, Frame, MassFunction};
use vitalfuse::model::{Band, BandedVitals, NormalRanges, RiskLevel, VitalGroup, VitalKind};

pub type LabelSet = BTreeSet<usize>;

pub fn to_labels(mask: FocalSet) -> LabelSet {
    (0..16).filter(|i| mask.0 & (1 << i) != 0).collect()
}

/// Random mass function with one to four focal elements over `frame`.
pub fn random_mass<R: Rng>(rng: &mut R, frame: &Frame) -> MassFunction {
    let n = frame.len();
    let full = (1u32 << n) - 1;
    let k = rng.gen_range(1..=4);
    let mut sets = Vec::new();
    let mut weights = Vec::new();
    for _ in 0..k {
        sets.push(FocalSet(rng.gen_range(1..=full) as u16));
        weights.push(rng.gen_range(0.01..1.0f64));
    }
    let total: f64 = weights.iter().sum();
    MassFunction::new(
        frame.clone(),
        sets.into_iter().zip(weights).map(|(s, w)| (s, w / total)),
    )
    .unwrap()
}

/// Dempster's rule by exhaustive enumeration of focal-element products,
/// over explicit label sets. `None` when the evidence is totally conflicting.
pub fn oracle_combine(a: &MassFunction, b: &MassFunction) -> Option<(BTreeMap<LabelSet, f64>, f64)> {
    let mut joint: BTreeMap<LabelSet, f64> = BTreeMap::new();
    let mut conflict = 0.0;
    for (sa, ma) in a.focal_elements() {
        for (sb, mb) in b.focal_elements() {
            let inter: LabelSet = to_labels(*sa).intersection(&to_labels(*sb)).copied().collect();
            if inter.is_empty() {
                conflict += ma * mb;
            } else {
                *joint.entry(inter).or_insert(0.0) += ma * mb;
            }
        }
    }
    if conflict >= 1.0 - 1e-12 {
        return None;
    }
    for v in joint.values_mut() {
        *v /= 1.0 - conflict;
    }
    Some((joint, conflict))
}

pub fn oracle_belief(m: &BTreeMap<LabelSet, f64>, a: &LabelSet) -> f64 {
    m.iter().filter(|(s, _)| s.is_subset(a)).map(|(_, v)| v).sum()
}

pub fn oracle_plausibility(m: &BTreeMap<LabelSet, f64>, a: &LabelSet) -> f64 {
    m.iter().filter(|(s, _)| !s.is_disjoint(a)).map(|(_, v)| v).sum()
}

pub fn as_label_map(m: &MassFunction) -> BTreeMap<LabelSet, f64> {
    m.focal_elements().iter().map(|(s, v)| (to_labels(*s), *v)).collect()
}

/// Symbolic cell of an anomaly grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cell {
    Empty,
    Below,
    In,
    Above,
}

/// Labels straight from the stated rule: an out-of-range cell is a
/// reading error exactly when all other non-empty cells of its row and the
/// same-column cells of the rows directly before and after are in range.
pub fn oracle_labels(grid: &[[Cell; 5]]) -> Vec<[Option<AnomalyLabel>; 5]> {
    let ok = |c: Cell| c == Cell::In || c == Cell::Empty;
    let mut out = Vec::new();
    for r in 0..grid.len() {
        let mut row = [None; 5];
        for c in 0..5 {
            row[c] = match grid[r][c] {
                Cell::Empty => None,
                Cell::In => Some(AnomalyLabel::Normal),
                Cell::Below | Cell::Above => {
                    let mut corroborated = false;
                    for k in 0..5 {
                        if k != c && !ok(grid[r][k]) {
                            corroborated = true;
                        }
                    }
                    if r > 0 && !ok(grid[r - 1][c]) {
                        corroborated = true;
                    }
                    if r + 1 < grid.len() && !ok(grid[r + 1][c]) {
                        corroborated = true;
                    }
                    Some(if corroborated {
                        AnomalyLabel::Anomaly
                    } else {
                        AnomalyLabel::ReadingError
                    })
                }
            };
        }
        out.push(row);
    }
    out
}

/// The kind that carries each group's reading in generated grids.
pub fn carrier(g: VitalGroup) -> VitalKind {
    match g {
        VitalGroup::Respiratory => VitalKind::RespiratoryRate,
        VitalGroup::BloodPh => VitalKind::BloodPh,
        VitalGroup::Heart => VitalKind::HeartRate,
        VitalGroup::BloodPressure => VitalKind::BloodPressureSystolic,
        VitalGroup::Temperature => VitalKind::BodyTemperature,
    }
}

/// Concrete record grid realizing a symbolic one for a patient of `age`.
pub fn realize(grid: &[[Cell; 5]], ranges: &NormalRanges, age: u32) -> RecordGrid {
    let rows = grid
        .iter()
        .enumerate()
        .map(|(r, cells)| {
            let mut values = [None; 6];
            for g in VitalGroup::ALL {
                let kind = carrier(g);
                let iv = ranges.normal_range(kind, age).unwrap();
                values[kind.index()] = match cells[g.index()] {
                    Cell::Empty => None,
                    Cell::Below => Some(iv.lo - 0.3 * iv.width()),
                    Cell::In => Some(iv.mid()),
                    Cell::Above => Some(iv.hi + 0.3 * iv.width()),
                };
            }
            Record {
                ts_ms: r as i64 * 60_000,
                values,
            }
        })
        .collect();
    RecordGrid { rows }
}

/// Mean squared one-step error of an LSTM written out directly from the
/// cell equations, gate order input, forget, candidate, output.
pub fn oracle_lstm_loss(model: &vitalfuse::forecast::LstmModel, inputs: &[f64], targets: &[f64]) -> f64 {
    let n = model.hidden_size();
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut h = vec![0.0; n];
    let mut c = vec![0.0; n];
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let pre = |g: usize, j: usize| {
            let u = &model.w_rec(g)[j * n..(j + 1) * n];
            model.w_in(g)[j] * x + u.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + model.bias(g)[j]
        };
        let mut h_new = vec![0.0; n];
        for j in 0..n {
            let i = sig(pre(0, j));
            let f = sig(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sig(pre(3, j));
            c[j] = f * c[j] + i * g;
            h_new[j] = o * c[j].tanh();
        }
        h = h_new;
        let out: f64 = model.head_w().iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() + model.head_b();
        total += (out - y).powi(2);
    }
    total / inputs.len() as f64
}

/// Largest relative disagreement between the analytic gradient and central
/// differences with step `step`. Magnitudes below `floor` are compared on
/// an absolute scale of `floor`.
pub fn gradient_check(
    model: &vitalfuse::forecast::LstmModel,
    inputs: &[f64],
    targets: &[f64],
    step: f64,
    floor: f64,
) -> f64 {
    let (_, analytic) = vitalfuse::forecast::lstm_gradients(model, inputs, targets).unwrap();
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..analytic.len() {
        let orig = probe.params()[i];
        probe.params_mut()[i] = orig + step;
        let up = oracle_lstm_loss(&probe, inputs, targets);
        probe.params_mut()[i] = orig - step;
        let down = oracle_lstm_loss(&probe, inputs, targets);
        probe.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * step);
        let scale = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / scale);
    }
    worst
}

/// Risk rules as printed, tab separated: five bands then the risk.
pub const TRACE_TABLE: &str = "\
Low	Normal	Normal	Normal	High	High
Lowest	Normal	Normal	Normal	Highest	High
Medium	Normal	Normal	Normal	Medium	Medium
High	Normal	Normal	Normal	Normal	Low
Normal	High	High	High	High	High
Normal	High	Normal	High	Medium	High
High	High	Normal	High	Highest	Highest
Medium	Medium	Medium	Medium	Medium	Medium
Medium	Medium	Low	High	Normal	Medium
High	Normal	Medium	Medium	Normal	Medium
low	Low	Normal	Low	High	High
lowest	Lowest	High	Low	Highest	Highest
Normal	Lowest	High	Normal	High	High
Normal	Normal	Normal	High	Medium	Medium
Normal	Normal	Medium	lowest	Normal	Medium";

/// Decision cells as printed: risk row, parameter, text.
pub const DECISION_TABLE: &str = "\
High	Respiratory rate	Must put a patient on ventilator and requires making lung CT
High	Blood PH level	Should to Take medicine and follow the Blood acidity
High	Heart rate	Taking medicine with Antiviral or Anti-malaria
High	Blood pressure	Taking medicine with Antiviral or Anti-malaria
High	Body Temperature	Taking Antipyretic
Medium	Respiratory rate	Must record to avoid reaching the high-risk level
Medium	Blood PH level	Follow Acidity
Medium	Heart rate	Taking medicine
Medium	Blood pressure	Taking medicine
Medium	Body Temperature	Taking Antipyretic and observing it continuously
Low	Respiratory rate	Reassured case
Low	Blood PH level	Stable case
Low	Heart rate	Follow the heart pulse rate
Low	Blood pressure	Follow the stable case
Low	Body Temperature	Follow the stable case";

pub fn parse_band(s: &str) -> Band {
    match s.to_ascii_lowercase().as_str() {
        "lowest" => Band::Lowest,
        "low" => Band::Low,
        "normal" => Band::Normal,
        "medium" => Band::Medium,
        "high" => Band::High,
        "highest" => Band::Highest,
        other => panic!("band {other}"),
    }
}

pub fn parse_risk(s: &str) -> RiskLevel {
    match s {
        "Low" => RiskLevel::Low,
        "Medium" => RiskLevel::Medium,
        "High" => RiskLevel::High,
        "Highest" => RiskLevel::Highest,
        other => panic!("risk {other}"),
    }
}

pub fn parse_group(s: &str) -> VitalGroup {
    match s {
        "Respiratory rate" => VitalGroup::Respiratory,
        "Blood PH level" => VitalGroup::BloodPh,
        "Heart rate" => VitalGroup::Heart,
        "Blood pressure" => VitalGroup::BloodPressure,
        "Body Temperature" => VitalGroup::Temperature,
        other => panic!("group {other}"),
    }
}

pub fn trace_rows() -> Vec<(BandedVitals, RiskLevel)> {
    TRACE_TABLE
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            assert_eq!(f.len(), 6);
            let b = [0, 1, 2, 3, 4].map(|i| parse_band(f[i]));
            (BandedVitals::from_array(b), parse_risk(f[5]))
        })
        .collect()
}
