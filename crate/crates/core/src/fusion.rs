//! Dempster-Shafer evidence fusion over a small frame of discernment.
//!
//! Focal sets are bitmasks over frame positions, so subset and intersection
//! tests are single integer operations. A [`MassFunction`] keeps only its
//! non-zero focal elements, sorted by mask.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Band, RiskLevel, VitalGroup};

pub const MAX_FRAME: usize = 16;
/// Tolerance on the total mass of caller-supplied assignments.
pub const MASS_TOLERANCE: f64 = 1e-9;
/// Conflict at or above `1 - CONFLICT_EPS` is treated as total.
pub const CONFLICT_EPS: f64 = 1e-12;

/// Ordered, duplicate-free hypothesis labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    labels: Arc<[String]>,
}

impl Frame {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.len() > MAX_FRAME {
            return Err(Error::validation(format!(
                "frame size {} outside 1..={MAX_FRAME}",
                labels.len()
            )));
        }
        for (i, l) in labels.iter().enumerate() {
            if l.is_empty() || l.contains([',', '{', '}', ':', '|', ' ']) {
                return Err(Error::validation(format!("invalid hypothesis label `{l}`")));
            }
            if labels[..i].contains(l) {
                return Err(Error::validation(format!("duplicate hypothesis `{l}`")));
            }
        }
        Ok(Frame {
            labels: labels.into(),
        })
    }

    /// The triage frame {Low, Medium, High}.
    pub fn risk() -> Self {
        Frame::new(["Low", "Medium", "High"]).expect("static frame")
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn position(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn theta(&self) -> FocalSet {
        FocalSet(((1u32 << self.len()) - 1) as u16)
    }

    pub fn singleton(&self, idx: usize) -> FocalSet {
        assert!(idx < self.len(), "hypothesis index out of frame");
        FocalSet(1 << idx)
    }

    pub fn contains_set(&self, a: FocalSet) -> bool {
        (a.0 as u32) < (1u32 << self.len())
    }

    /// Every subset of the frame, including the empty set, in mask order.
    pub fn power_set(&self) -> impl Iterator<Item = FocalSet> {
        (0..(1u32 << self.len())).map(|m| FocalSet(m as u16))
    }

    pub fn set_from_labels<'a>(&self, labels: impl IntoIterator<Item = &'a str>) -> Result<FocalSet> {
        let mut mask = 0u16;
        for l in labels {
            let p = self
                .position(l)
                .ok_or_else(|| Error::validation(format!("`{l}` not in frame")))?;
            mask |= 1 << p;
        }
        Ok(FocalSet(mask))
    }

    pub fn format_set(&self, a: FocalSet) -> String {
        let names: Vec<&str> = (0..self.len())
            .filter(|i| a.contains(*i))
            .map(|i| self.labels[i].as_str())
            .collect();
        format!("{{{}}}", names.join(","))
    }
}

/// A subset of the frame; bit `k` set means hypothesis `k` is a member.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FocalSet(pub u16);

impl FocalSet {
    pub const EMPTY: FocalSet = FocalSet(0);

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, idx: usize) -> bool {
        self.0 & (1 << idx) != 0
    }

    pub fn is_subset_of(self, other: FocalSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn intersect(self, other: FocalSet) -> FocalSet {
        FocalSet(self.0 & other.0)
    }

    pub fn union(self, other: FocalSet) -> FocalSet {
        FocalSet(self.0 | other.0)
    }

    pub fn complement(self, frame: &Frame) -> FocalSet {
        FocalSet(!self.0 & frame.theta().0)
    }

    pub fn cardinality(self) -> u32 {
        self.0.count_ones()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeliefInterval {
    pub spt: f64,
    pub pls: f64,
    pub u: f64,
}

/// Basic probability assignment: non-negative masses on non-empty subsets
/// summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction {
    frame: Frame,
    focal: Vec<(FocalSet, f64)>,
}

impl MassFunction {
    /// Validate and build a mass function. Duplicate sets are merged and
    /// zero masses dropped. A total within [`MASS_TOLERANCE`] of one is
    /// renormalized; anything further off is rejected.
    pub fn new(frame: Frame, assignments: impl IntoIterator<Item = (FocalSet, f64)>) -> Result<Self> {
        let mut acc: BTreeMap<FocalSet, f64> = BTreeMap::new();
        for (set, mass) in assignments {
            if !frame.contains_set(set) {
                return Err(Error::validation(format!(
                    "focal set mask {:#x} exceeds frame of size {}",
                    set.0,
                    frame.len()
                )));
            }
            if !mass.is_finite() || mass < 0.0 {
                return Err(Error::validation(format!(
                    "invalid mass {mass} on {}",
                    frame.format_set(set)
                )));
            }
            if set.is_empty() && mass > 0.0 {
                return Err(Error::validation("mass assigned to the empty set"));
            }
            *acc.entry(set).or_insert(0.0) += mass;
        }
        let total: f64 = acc.values().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::validation(format!("masses sum to {total}, expected 1")));
        }
        // Totals off by rounding only are kept as given, so parsing the
        // text form reproduces the exact masses.
        let scale = if (total - 1.0).abs() > 1e-12 { total } else { 1.0 };
        let focal = acc
            .into_iter()
            .filter(|(s, m)| *m > 0.0 && !s.is_empty())
            .map(|(s, m)| (s, m / scale))
            .collect();
        Ok(MassFunction { frame, focal })
    }

    /// All mass on the whole frame: total ignorance.
    pub fn vacuous(frame: Frame) -> Self {
        let theta = frame.theta();
        MassFunction {
            frame,
            focal: vec![(theta, 1.0)],
        }
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    /// Non-zero focal elements in mask order.
    pub fn focal_elements(&self) -> &[(FocalSet, f64)] {
        &self.focal
    }

    pub fn mass(&self, a: FocalSet) -> f64 {
        self.focal
            .binary_search_by_key(&a, |(s, _)| *s)
            .map(|i| self.focal[i].1)
            .unwrap_or(0.0)
    }

    fn check_set(&self, a: FocalSet) -> Result<()> {
        if self.frame.contains_set(a) {
            Ok(())
        } else {
            Err(Error::validation(format!(
                "set mask {:#x} is not over this frame of size {}",
                a.0,
                self.frame.len()
            )))
        }
    }

    /// Support: total mass of the subsets of `a`.
    pub fn belief(&self, a: FocalSet) -> Result<f64> {
        self.check_set(a)?;
        Ok(self
            .focal
            .iter()
            .filter(|(s, _)| s.is_subset_of(a))
            .map(|(_, m)| m)
            .sum())
    }

    /// One minus the support of the complement of `a`.
    pub fn plausibility(&self, a: FocalSet) -> Result<f64> {
        self.check_set(a)?;
        Ok(1.0 - self.belief(a.complement(&self.frame))?)
    }

    pub fn uncertainty(&self, a: FocalSet) -> Result<BeliefInterval> {
        let spt = self.belief(a)?;
        let pls = self.plausibility(a)?;
        Ok(BeliefInterval {
            spt,
            pls,
            u: pls - spt,
        })
    }

    /// Dempster's rule with conflict normalization `1 - K`.
    pub fn combine(&self, other: &MassFunction) -> Result<MassFunction> {
        self.combine_with_conflict(other).map(|(m, _)| m)
    }

    /// Combination result together with its conflict mass `K`.
    pub fn combine_with_conflict(&self, other: &MassFunction) -> Result<(MassFunction, f64)> {
        if self.frame != other.frame {
            return Err(Error::validation("cannot combine masses over different frames"));
        }
        let mut acc: BTreeMap<FocalSet, f64> = BTreeMap::new();
        let mut conflict = 0.0;
        for &(b, mb) in &self.focal {
            for &(c, mc) in &other.focal {
                let a = b.intersect(c);
                let p = mb * mc;
                if a.is_empty() {
                    conflict += p;
                } else {
                    *acc.entry(a).or_insert(0.0) += p;
                }
            }
        }
        if conflict >= 1.0 - CONFLICT_EPS {
            return Err(Error::Conflict {
                left: 0,
                right: 1,
                conflict,
            });
        }
        let norm = 1.0 - conflict;
        let focal = acc
            .into_iter()
            .filter(|(_, m)| *m > 0.0)
            .map(|(s, m)| (s, m / norm))
            .collect();
        Ok((
            MassFunction {
                frame: self.frame.clone(),
                focal,
            },
            conflict,
        ))
    }

    /// Text form: `Low,Medium,High | {Low}:0.6 {Low,Medium,High}:0.4`.
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MassFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} |", self.frame.labels.join(","))?;
        for (s, m) in &self.focal {
            write!(f, " {}:{:?}", self.frame.format_set(*s), m)?;
        }
        Ok(())
    }
}

impl FromStr for MassFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (frame_part, rest) = s
            .split_once('|')
            .ok_or_else(|| Error::validation("mass text needs `<frame> | <focal:mass>...`"))?;
        let frame = Frame::new(frame_part.trim().split(',').map(str::trim))?;
        let mut assignments = Vec::new();
        for tok in rest.split_whitespace() {
            let (set_txt, mass_txt) = tok
                .rsplit_once(':')
                .ok_or_else(|| Error::validation(format!("bad focal element `{tok}`")))?;
            let inner = set_txt
                .strip_prefix('{')
                .and_then(|t| t.strip_suffix('}'))
                .ok_or_else(|| Error::validation(format!("bad focal set `{set_txt}`")))?;
            let set = if inner.is_empty() {
                FocalSet::EMPTY
            } else {
                frame.set_from_labels(inner.split(','))?
            };
            let mass: f64 = mass_txt
                .parse()
                .map_err(|_| Error::validation(format!("bad mass `{mass_txt}`")))?;
            assignments.push((set, mass));
        }
        MassFunction::new(frame, assignments)
    }
}

/// Left fold of [`MassFunction::combine`]. A conflict error names the index
/// of the source that could not be merged into the running result.
pub fn combine_all(masses: &[MassFunction]) -> Result<MassFunction> {
    let (head, tail) = masses
        .split_first()
        .ok_or_else(|| Error::validation("combine_all needs at least one mass function"))?;
    let mut acc = head.clone();
    for (i, m) in tail.iter().enumerate() {
        acc = acc.combine(m).map_err(|e| match e {
            Error::Conflict { conflict, .. } => Error::Conflict {
                left: i,
                right: i + 1,
                conflict,
            },
            other => other,
        })?;
    }
    Ok(acc)
}

/// Share of a `High`/`Low` reading's evidence placed on the `{High}` singleton;
/// the remainder goes to `{Medium, High}`.
pub const HIGH_SINGLETON_SHARE: f64 = 0.5;

/// Evidence from one banded parameter, discounted by the sensor's reliability.
pub fn vital_to_mass(group: VitalGroup, band: Band, reliability: f64) -> Result<MassFunction> {
    if !(reliability > 0.0 && reliability <= 1.0) {
        return Err(Error::validation(format!(
            "reliability {reliability} for {group} outside (0, 1]"
        )));
    }
    let frame = Frame::risk();
    let low = FocalSet(0b001);
    let medium = FocalSet(0b010);
    let high = FocalSet(0b100);
    let undiscounted: Vec<(FocalSet, f64)> = match band {
        Band::Normal => vec![(low, 1.0)],
        Band::Medium => vec![(medium, 1.0)],
        Band::Low | Band::High => vec![
            (high, HIGH_SINGLETON_SHARE),
            (medium.union(high), 1.0 - HIGH_SINGLETON_SHARE),
        ],
        Band::Lowest | Band::Highest => vec![(high, 1.0)],
    };
    let theta = frame.theta();
    let mut assignments: Vec<(FocalSet, f64)> = undiscounted
        .into_iter()
        .map(|(s, m)| (s, m * reliability))
        .collect();
    assignments.push((theta, 1.0 - reliability));
    MassFunction::new(frame, assignments)
}

/// Pick the risk hypothesis with the largest belief. Ties go to the more
/// severe level.
pub fn decide(m: &MassFunction) -> Result<(RiskLevel, BeliefInterval)> {
    let frame = m.frame();
    if *frame != Frame::risk() {
        return Err(Error::validation("decide needs the {Low,Medium,High} risk frame"));
    }
    const LEVELS: [RiskLevel; 3] = [RiskLevel::Low, RiskLevel::Medium, RiskLevel::High];
    let mut best = 0usize;
    let mut best_bel = f64::NEG_INFINITY;
    for i in 0..3 {
        let bel = m.belief(frame.singleton(i))?;
        if bel >= best_bel - CONFLICT_EPS {
            best = i;
            best_bel = bel.max(best_bel);
        }
    }
    Ok((LEVELS[best], m.uncertainty(frame.singleton(best))?))
}
