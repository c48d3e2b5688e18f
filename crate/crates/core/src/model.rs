//! Domain vocabulary: vital kinds, age brackets, normal ranges and banding.
//!
//! Readings are discretized against age-specific normal intervals into the
//! six-step band vocabulary used by the risk rule table. Outside the normal
//! interval the band is chosen from the deviation measured in range widths.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One of the six sensor channels carried on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum VitalKind {
    #[serde(rename = "heart_rate")]
    HeartRate,
    #[serde(rename = "respiratory_rate")]
    RespiratoryRate,
    #[serde(rename = "bp_systolic")]
    BloodPressureSystolic,
    #[serde(rename = "bp_diastolic")]
    BloodPressureDiastolic,
    #[serde(rename = "body_temperature")]
    BodyTemperature,
    #[serde(rename = "blood_ph")]
    BloodPh,
}

impl VitalKind {
    pub const ALL: [VitalKind; 6] = [
        VitalKind::HeartRate,
        VitalKind::RespiratoryRate,
        VitalKind::BloodPressureSystolic,
        VitalKind::BloodPressureDiastolic,
        VitalKind::BodyTemperature,
        VitalKind::BloodPh,
    ];

    pub fn token(self) -> &'static str {
        match self {
            VitalKind::HeartRate => "heart_rate",
            VitalKind::RespiratoryRate => "respiratory_rate",
            VitalKind::BloodPressureSystolic => "bp_systolic",
            VitalKind::BloodPressureDiastolic => "bp_diastolic",
            VitalKind::BodyTemperature => "body_temperature",
            VitalKind::BloodPh => "blood_ph",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            VitalKind::HeartRate => "beats/min",
            VitalKind::RespiratoryRate => "breaths/min",
            VitalKind::BloodPressureSystolic | VitalKind::BloodPressureDiastolic => "mmHg",
            VitalKind::BodyTemperature => "°C",
            VitalKind::BloodPh => "pH",
        }
    }

    /// Position in [`VitalKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn group(self) -> VitalGroup {
        match self {
            VitalKind::HeartRate => VitalGroup::Heart,
            VitalKind::RespiratoryRate => VitalGroup::Respiratory,
            VitalKind::BloodPressureSystolic | VitalKind::BloodPressureDiastolic => {
                VitalGroup::BloodPressure
            }
            VitalKind::BodyTemperature => VitalGroup::Temperature,
            VitalKind::BloodPh => VitalGroup::BloodPh,
        }
    }
}

impl fmt::Display for VitalKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for VitalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VitalKind::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::validation(format!("unknown vital kind `{s}`")))
    }
}

/// The five clinical parameters assessed by triage. Systolic and diastolic
/// pressure together form [`VitalGroup::BloodPressure`].
///
/// Declaration order matches the rule-table columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VitalGroup {
    Respiratory,
    BloodPh,
    Heart,
    BloodPressure,
    Temperature,
}

impl VitalGroup {
    pub const ALL: [VitalGroup; 5] = [
        VitalGroup::Respiratory,
        VitalGroup::BloodPh,
        VitalGroup::Heart,
        VitalGroup::BloodPressure,
        VitalGroup::Temperature,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn token(self) -> &'static str {
        match self {
            VitalGroup::Respiratory => "respiratory",
            VitalGroup::BloodPh => "blood_ph",
            VitalGroup::Heart => "heart",
            VitalGroup::BloodPressure => "blood_pressure",
            VitalGroup::Temperature => "temperature",
        }
    }

    /// Wire kinds that feed this group.
    pub fn kinds(self) -> &'static [VitalKind] {
        match self {
            VitalGroup::Respiratory => &[VitalKind::RespiratoryRate],
            VitalGroup::BloodPh => &[VitalKind::BloodPh],
            VitalGroup::Heart => &[VitalKind::HeartRate],
            VitalGroup::BloodPressure => &[
                VitalKind::BloodPressureSystolic,
                VitalKind::BloodPressureDiastolic,
            ],
            VitalGroup::Temperature => &[VitalKind::BodyTemperature],
        }
    }
}

impl fmt::Display for VitalGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One timestamped sensor reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VitalSample {
    #[serde(rename = "patient")]
    pub patient_id: String,
    pub kind: VitalKind,
    pub ts_ms: i64,
    pub value: f64,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientProfile {
    pub patient_id: String,
    pub age_years: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height_cm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_kg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<String>,
}

pub const MAX_AGE_YEARS: u32 = 130;

impl PatientProfile {
    pub fn new(patient_id: impl Into<String>, age_years: u32) -> Result<Self> {
        if age_years > MAX_AGE_YEARS {
            return Err(Error::validation(format!(
                "age {age_years} exceeds {MAX_AGE_YEARS}"
            )));
        }
        Ok(PatientProfile {
            patient_id: patient_id.into(),
            age_years,
            height_cm: None,
            weight_kg: None,
            sex: None,
        })
    }
}

/// Age columns of the normal-range table, closed into half-open brackets
/// [0,18) [18,26) [26,36) [36,46) [46,56) [56,66) [66,∞).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgeBracket {
    Under18,
    B18_25,
    B28_35,
    B36_45,
    B45_55,
    B56_65,
    Over65,
}

impl AgeBracket {
    pub const ALL: [AgeBracket; 7] = [
        AgeBracket::Under18,
        AgeBracket::B18_25,
        AgeBracket::B28_35,
        AgeBracket::B36_45,
        AgeBracket::B45_55,
        AgeBracket::B56_65,
        AgeBracket::Over65,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Column heading as printed in the range table.
    pub fn label(self) -> &'static str {
        match self {
            AgeBracket::Under18 => "<18",
            AgeBracket::B18_25 => "18-25",
            AgeBracket::B28_35 => "28-35",
            AgeBracket::B36_45 => "36-45",
            AgeBracket::B45_55 => "45-55",
            AgeBracket::B56_65 => "56-65",
            AgeBracket::Over65 => "65+",
        }
    }

    /// Key used in range config files.
    pub fn token(self) -> &'static str {
        match self {
            AgeBracket::Under18 => "under_18",
            AgeBracket::B18_25 => "18_25",
            AgeBracket::B28_35 => "28_35",
            AgeBracket::B36_45 => "36_45",
            AgeBracket::B45_55 => "45_55",
            AgeBracket::B56_65 => "56_65",
            AgeBracket::Over65 => "over_65",
        }
    }
}

pub fn bracket(age_years: u32) -> Result<AgeBracket> {
    let b = match age_years {
        0..=17 => AgeBracket::Under18,
        18..=25 => AgeBracket::B18_25,
        26..=35 => AgeBracket::B28_35,
        36..=45 => AgeBracket::B36_45,
        46..=55 => AgeBracket::B45_55,
        56..=65 => AgeBracket::B56_65,
        66..=MAX_AGE_YEARS => AgeBracket::Over65,
        _ => {
            return Err(Error::validation(format!(
                "age {age_years} outside [0, {MAX_AGE_YEARS}]"
            )))
        }
    };
    Ok(b)
}

/// Closed interval `[lo, hi]` in the unit of its vital kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// Discretized reading. Severity rank is 0 for `Normal`, 1 for `Medium`,
/// 2 for `Low`/`High` and 3 for `Lowest`/`Highest`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Band {
    Lowest,
    Low,
    Normal,
    Medium,
    High,
    Highest,
}

impl Band {
    pub const ALL: [Band; 6] = [
        Band::Lowest,
        Band::Low,
        Band::Normal,
        Band::Medium,
        Band::High,
        Band::Highest,
    ];

    pub fn rank(self) -> u8 {
        match self {
            Band::Normal => 0,
            Band::Medium => 1,
            Band::Low | Band::High => 2,
            Band::Lowest | Band::Highest => 3,
        }
    }

    pub fn is_extreme(self) -> bool {
        matches!(self, Band::Lowest | Band::Highest)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Band::Lowest => "Lowest",
            Band::Low => "Low",
            Band::Normal => "Normal",
            Band::Medium => "Medium",
            Band::High => "High",
            Band::Highest => "Highest",
        }
    }
}

impl fmt::Display for Band {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Band {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Band::ALL
            .into_iter()
            .find(|b| b.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown band `{s}`")))
    }
}

/// The five banded parameters in rule-table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BandedVitals {
    pub respiratory: Band,
    pub blood_ph: Band,
    pub heart: Band,
    pub blood_pressure: Band,
    pub temperature: Band,
}

impl BandedVitals {
    pub const fn new(
        respiratory: Band,
        blood_ph: Band,
        heart: Band,
        blood_pressure: Band,
        temperature: Band,
    ) -> Self {
        BandedVitals {
            respiratory,
            blood_ph,
            heart,
            blood_pressure,
            temperature,
        }
    }

    pub const fn all_normal() -> Self {
        BandedVitals::new(Band::Normal, Band::Normal, Band::Normal, Band::Normal, Band::Normal)
    }

    pub fn to_array(&self) -> [Band; 5] {
        [
            self.respiratory,
            self.blood_ph,
            self.heart,
            self.blood_pressure,
            self.temperature,
        ]
    }

    pub fn from_array(b: [Band; 5]) -> Self {
        BandedVitals::new(b[0], b[1], b[2], b[3], b[4])
    }

    pub fn get(&self, group: VitalGroup) -> Band {
        self.to_array()[group.index()]
    }

    pub fn set(&mut self, group: VitalGroup, band: Band) {
        let mut a = self.to_array();
        a[group.index()] = band;
        *self = BandedVitals::from_array(a);
    }

    /// Groups whose band is not `Normal`, in column order.
    pub fn contributing(&self) -> Vec<VitalGroup> {
        VitalGroup::ALL
            .into_iter()
            .filter(|g| self.get(*g) != Band::Normal)
            .collect()
    }
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize,
)]
pub enum RiskLevel {
    Low,
    Medium,
    High,
    Highest,
}

impl RiskLevel {
    pub const ALL: [RiskLevel; 4] = [
        RiskLevel::Low,
        RiskLevel::Medium,
        RiskLevel::High,
        RiskLevel::Highest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RiskLevel::Low => "Low",
            RiskLevel::Medium => "Medium",
            RiskLevel::High => "High",
            RiskLevel::Highest => "Highest",
        }
    }
}

impl fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Normal interval for every (kind, age bracket) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalRanges {
    table: [[Interval; 7]; 6],
}

const fn row(cells: [(f64, f64); 7]) -> [Interval; 7] {
    let mut out = [Interval::new(0.0, 0.0); 7];
    let mut i = 0;
    while i < 7 {
        out[i] = Interval::new(cells[i].0, cells[i].1);
        i += 1;
    }
    out
}

// Rows follow VitalKind::ALL, columns AgeBracket::ALL.
// Pressure cells give the upper bound; lower bounds are hypotension cutoffs.
// Respiratory "10-22" is carried forward to the brackets left blank in the source table.
const DEFAULT_TABLE: [[Interval; 7]; 6] = [
    row([
        (70.0, 73.0),
        (70.0, 73.0),
        (71.0, 74.0),
        (71.0, 75.0),
        (72.0, 76.0),
        (72.0, 75.0),
        (70.0, 73.0),
    ]),
    row([
        (25.0, 35.0),
        (18.0, 20.0),
        (10.0, 22.0),
        (10.0, 22.0),
        (10.0, 22.0),
        (10.0, 22.0),
        (10.0, 22.0),
    ]),
    row([
        (90.0, 120.0),
        (90.0, 120.0),
        (90.0, 134.0),
        (90.0, 137.0),
        (90.0, 142.0),
        (90.0, 144.0),
        (90.0, 144.0),
    ]),
    row([
        (60.0, 80.0),
        (60.0, 80.0),
        (60.0, 85.0),
        (60.0, 87.0),
        (60.0, 89.0),
        (60.0, 90.0),
        (60.0, 90.0),
    ]),
    row([(36.1, 37.2); 7]),
    row([(7.35, 7.45); 7]),
];

pub const RANGES_FORMAT_VERSION: u32 = 1;

impl Default for NormalRanges {
    fn default() -> Self {
        NormalRanges {
            table: DEFAULT_TABLE,
        }
    }
}

impl NormalRanges {
    pub fn get(&self, kind: VitalKind, bracket: AgeBracket) -> Interval {
        self.table[kind.index()][bracket.index()]
    }

    pub fn set(&mut self, kind: VitalKind, bracket: AgeBracket, iv: Interval) -> Result<()> {
        if !(iv.lo.is_finite() && iv.hi.is_finite() && iv.lo < iv.hi) {
            return Err(Error::validation(format!(
                "invalid range [{}, {}] for {kind}/{}",
                iv.lo,
                iv.hi,
                bracket.token()
            )));
        }
        self.table[kind.index()][bracket.index()] = iv;
        Ok(())
    }

    pub fn normal_range(&self, kind: VitalKind, age_years: u32) -> Result<Interval> {
        Ok(self.get(kind, bracket(age_years)?))
    }

    pub fn band(&self, kind: VitalKind, value: f64, age_years: u32) -> Result<Band> {
        if !value.is_finite() {
            return Err(Error::validation(format!("non-finite {kind} value {value}")));
        }
        Ok(band_in(self.normal_range(kind, age_years)?, value))
    }

    /// Band of a parameter group from whichever component readings are present.
    /// Blood pressure takes the worse of its systolic and diastolic bands.
    pub fn group_band(
        &self,
        group: VitalGroup,
        values: &[Option<f64>; 6],
        age_years: u32,
    ) -> Result<Option<Band>> {
        let mut worst: Option<Band> = None;
        for kind in group.kinds() {
            if let Some(v) = values[kind.index()] {
                let b = self.band(*kind, v, age_years)?;
                if worst.map_or(true, |w| b.rank() > w.rank()) {
                    worst = Some(b);
                }
            }
        }
        Ok(worst)
    }

    /// Render as a versioned `key = lo hi` config file.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        out.push_str("# normal ranges: <kind>.<bracket> = <lo> <hi>\n");
        out.push_str(
            "# respiratory_rate for 28_35 and older carries the \"10-22\" cell forward (source is ambiguous)\n",
        );
        out.push_str(&format!("version = {RANGES_FORMAT_VERSION}\n"));
        for kind in VitalKind::ALL {
            for b in AgeBracket::ALL {
                let iv = self.get(kind, b);
                out.push_str(&format!("{}.{} = {:?} {:?}\n", kind.token(), b.token(), iv.lo, iv.hi));
            }
        }
        out
    }

    /// Parse a config file. Keys not listed keep their compiled-in default.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut ranges = NormalRanges::default();
        let mut saw_version = false;
        for (lineno, key, value) in crate::config::key_values(text)? {
            if key == "version" {
                let v: u32 = value
                    .parse()
                    .map_err(|_| Error::validation(format!("line {lineno}: bad version")))?;
                if v != RANGES_FORMAT_VERSION {
                    return Err(Error::validation(format!(
                        "line {lineno}: unsupported ranges version {v}"
                    )));
                }
                saw_version = true;
                continue;
            }
            let (kind_tok, bracket_tok) = key.split_once('.').ok_or_else(|| {
                Error::validation(format!("line {lineno}: expected <kind>.<bracket>"))
            })?;
            let kind: VitalKind = kind_tok.parse()?;
            let b = AgeBracket::ALL
                .into_iter()
                .find(|b| b.token() == bracket_tok)
                .ok_or_else(|| {
                    Error::validation(format!("line {lineno}: unknown bracket `{bracket_tok}`"))
                })?;
            let nums: Vec<f64> = value
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::validation(format!("line {lineno}: bad number")))?;
            if nums.len() != 2 {
                return Err(Error::validation(format!(
                    "line {lineno}: expected two numbers"
                )));
            }
            ranges.set(kind, b, Interval::new(nums[0], nums[1]))?;
        }
        if !saw_version {
            return Err(Error::validation("ranges file has no version key"));
        }
        Ok(ranges)
    }
}

pub fn normal_range(kind: VitalKind, age_years: u32) -> Result<Interval> {
    NormalRanges::default().normal_range(kind, age_years)
}

pub fn band(kind: VitalKind, value: f64, age_years: u32) -> Result<Band> {
    NormalRanges::default().band(kind, value, age_years)
}

/// Deviation of `value` outside `iv`, in range widths; non-positive inside.
pub fn deviation(iv: Interval, value: f64) -> f64 {
    let w = iv.width();
    if value > iv.hi {
        (value - iv.hi) / w
    } else if value < iv.lo {
        (iv.lo - value) / w
    } else {
        0.0
    }
}

pub fn band_in(iv: Interval, value: f64) -> Band {
    let d = deviation(iv, value);
    let above = value > iv.hi;
    if d <= 0.0 {
        Band::Normal
    } else if d <= 0.25 {
        Band::Medium
    } else if d <= 0.75 {
        if above {
            Band::High
        } else {
            Band::Low
        }
    } else if above {
        Band::Highest
    } else {
        Band::Lowest
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_examples() {
        assert_eq!(bracket(17).unwrap(), AgeBracket::Under18);
        assert_eq!(bracket(30).unwrap(), AgeBracket::B28_35);
        assert_eq!(bracket(26).unwrap(), AgeBracket::B28_35);
        assert_eq!(bracket(45).unwrap(), AgeBracket::B36_45);
        assert_eq!(bracket(65).unwrap(), AgeBracket::B56_65);
        assert_eq!(bracket(66).unwrap(), AgeBracket::Over65);
        assert!(bracket(131).is_err());
    }

    #[test]
    fn bracket_adjacent_ages_are_adjacent() {
        for age in 0..MAX_AGE_YEARS {
            let a = bracket(age).unwrap().index();
            let b = bracket(age + 1).unwrap().index();
            assert!(b == a || b == a + 1, "age {age}");
        }
    }

    #[test]
    fn normal_range_examples() {
        assert_eq!(
            normal_range(VitalKind::BloodPh, 40).unwrap(),
            Interval::new(7.35, 7.45)
        );
        assert_eq!(
            normal_range(VitalKind::HeartRate, 20).unwrap(),
            Interval::new(70.0, 73.0)
        );
        assert_eq!(
            normal_range(VitalKind::RespiratoryRate, 20).unwrap(),
            Interval::new(18.0, 20.0)
        );
    }

    #[test]
    fn band_examples() {
        assert_eq!(band(VitalKind::BodyTemperature, 36.8, 30).unwrap(), Band::Normal);
        assert_eq!(band(VitalKind::BodyTemperature, 39.0, 30).unwrap(), Band::Highest);
        assert_eq!(band(VitalKind::RespiratoryRate, 12.0, 20).unwrap(), Band::Lowest);
        assert!(band(VitalKind::HeartRate, f64::NAN, 20).is_err());
        assert!(band(VitalKind::HeartRate, f64::INFINITY, 20).is_err());
    }

    #[test]
    fn band_threshold_edges() {
        // HR [70,73] at age 20, width 3
        let b = |v| band(VitalKind::HeartRate, v, 20).unwrap();
        assert_eq!(b(73.0), Band::Normal);
        assert_eq!(b(70.0), Band::Normal);
        assert_eq!(b(73.75), Band::Medium);
        assert_eq!(b(73.76), Band::High);
        assert_eq!(b(75.25), Band::High);
        assert_eq!(b(75.26), Band::Highest);
        assert_eq!(b(69.25), Band::Medium);
        assert_eq!(b(69.0), Band::Low);
        assert_eq!(b(67.0), Band::Lowest);
    }

    #[test]
    fn band_ranks() {
        assert_eq!(Band::Normal.rank(), 0);
        assert_eq!(Band::Low.rank(), Band::High.rank());
        assert_eq!(Band::Lowest.rank(), Band::Highest.rank());
    }

    #[test]
    fn pressure_group_takes_worse_component() {
        let r = NormalRanges::default();
        let mut v = [None; 6];
        v[VitalKind::BloodPressureSystolic.index()] = Some(110.0);
        v[VitalKind::BloodPressureDiastolic.index()] = Some(100.0);
        assert_eq!(
            r.group_band(VitalGroup::BloodPressure, &v, 20).unwrap(),
            Some(Band::Highest)
        );
        assert_eq!(r.group_band(VitalGroup::Heart, &v, 20).unwrap(), None);
    }

    #[test]
    fn config_round_trip() {
        let r = NormalRanges::default();
        let text = r.to_config_string();
        assert_eq!(NormalRanges::from_config_str(&text).unwrap(), r);
    }

    #[test]
    fn config_overrides_and_errors() {
        let r = NormalRanges::from_config_str("version = 1\nheart_rate.18_25 = 60 100\n").unwrap();
        assert_eq!(r.get(VitalKind::HeartRate, AgeBracket::B18_25), Interval::new(60.0, 100.0));
        assert!(NormalRanges::from_config_str("heart_rate.18_25 = 60 100\n").is_err());
        assert!(NormalRanges::from_config_str("version = 1\nheart_rate.18_25 = 100 60\n").is_err());
        assert!(NormalRanges::from_config_str("version = 1\nxyz.18_25 = 1 2\n").is_err());
        assert!(NormalRanges::from_config_str("version = 2\n").is_err());
    }
}
