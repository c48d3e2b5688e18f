//! `key = value` config files and the run configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::forecast::LstmConfig;
use crate::model::VitalGroup;

/// Split a `key = value` file into `(line number, key, value)` triples.
/// Blank lines and `#` comments are skipped.
pub fn key_values(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::validation(format!("line {lineno}: expected key = value")))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::validation(format!("line {lineno}: empty key")));
        }
        out.push((lineno, k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub const DEFAULT_EPOCH_S: f64 = 60.0;
pub const DEFAULT_FEATURE_TIMEOUT_S: f64 = 300.0;
pub const DEFAULT_RELIABILITY: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub data_dir: PathBuf,
    pub epoch_s: f64,
    pub feature_timeout_s: f64,
    pub lstm: LstmConfig,
    /// Evidence reliability per parameter group, in column order.
    pub reliabilities: [f64; 5],
    pub listen: Option<String>,
    pub scenario: Option<PathBuf>,
    pub ranges_file: Option<PathBuf>,
    /// Overrides the scenario and forecaster seeds when set.
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data_dir: PathBuf::from("data"),
            epoch_s: DEFAULT_EPOCH_S,
            feature_timeout_s: DEFAULT_FEATURE_TIMEOUT_S,
            lstm: LstmConfig::default(),
            reliabilities: [DEFAULT_RELIABILITY; 5],
            listen: None,
            scenario: None,
            ranges_file: None,
            seed: None,
        }
    }
}

fn num<T: std::str::FromStr>(lineno: usize, key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::validation(format!("line {lineno}: bad value `{v}` for {key}")))
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::default();
        cfg.apply_str(&text)?;
        Ok(cfg)
    }

    /// Overlay the settings of a config file onto `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<()> {
        let mut seen = BTreeMap::new();
        for (lineno, key, v) in key_values(text)? {
            if seen.insert(key.clone(), lineno).is_some() {
                return Err(Error::validation(format!("line {lineno}: duplicate key {key}")));
            }
            match key.as_str() {
                "data_dir" => self.data_dir = PathBuf::from(v),
                "epoch_s" => self.epoch_s = num(lineno, &key, &v)?,
                "feature_timeout_s" => self.feature_timeout_s = num(lineno, &key, &v)?,
                "listen" => self.listen = Some(v),
                "scenario" => self.scenario = Some(PathBuf::from(v)),
                "ranges_file" => self.ranges_file = Some(PathBuf::from(v)),
                "seed" => self.seed = Some(num(lineno, &key, &v)?),
                "lstm.hidden_units" => self.lstm.hidden_units = num(lineno, &key, &v)?,
                "lstm.epochs" => self.lstm.epochs = num(lineno, &key, &v)?,
                "lstm.learning_rate" => self.lstm.learning_rate = num(lineno, &key, &v)?,
                "lstm.grad_clip_norm" => self.lstm.grad_clip_norm = num(lineno, &key, &v)?,
                "lstm.lr_decay_factor" => self.lstm.lr_decay_factor = num(lineno, &key, &v)?,
                "lstm.lr_decay_epoch" => self.lstm.lr_decay_epoch = num(lineno, &key, &v)?,
                "lstm.rng_seed" => self.lstm.rng_seed = num(lineno, &key, &v)?,
                other => {
                    if let Some(g) = other.strip_prefix("reliability.") {
                        let group = VitalGroup::ALL
                            .into_iter()
                            .find(|x| x.token() == g)
                            .ok_or_else(|| {
                                Error::validation(format!("line {lineno}: unknown group `{g}`"))
                            })?;
                        self.reliabilities[group.index()] = num(lineno, &key, &v)?;
                    } else {
                        return Err(Error::validation(format!(
                            "line {lineno}: unknown key `{other}`"
                        )));
                    }
                }
            }
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epoch_s.is_finite() && self.epoch_s > 0.0) {
            return Err(Error::validation("epoch_s must be positive"));
        }
        if !(self.feature_timeout_s.is_finite() && self.feature_timeout_s > 0.0) {
            return Err(Error::validation("feature_timeout_s must be positive"));
        }
        for r in self.reliabilities {
            if !(r > 0.0 && r <= 1.0) {
                return Err(Error::validation(format!("reliability {r} outside (0, 1]")));
            }
        }
        self.lstm.validate()
    }
}
