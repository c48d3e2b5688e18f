//! Heart and respiration feature vectors with staleness resets, a skewness
//! threshold, and a least-squares linear map from heart to respiration space.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TIMEOUT_S: f64 = 300.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewThreshold {
    pub mu_t: f64,
    pub sigma_t: f64,
    pub tau: f64,
}

/// Mean, population standard deviation and `tau = mu + 2 sigma`.
pub fn skew_threshold(history: &[f64]) -> Result<SkewThreshold> {
    if history.len() < 2 {
        return Err(Error::validation("skew threshold needs at least two values"));
    }
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("skew history contains non-finite values"));
    }
    let n = history.len() as f64;
    if history.iter().all(|v| *v == history[0]) {
        return Ok(SkewThreshold {
            mu_t: history[0],
            sigma_t: 0.0,
            tau: history[0],
        });
    }
    let mu_t = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|v| (v - mu_t).powi(2)).sum::<f64>() / n;
    let sigma_t = var.sqrt();
    Ok(SkewThreshold {
        mu_t,
        sigma_t,
        tau: mu_t + 2.0 * sigma_t,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Respiration,
    Heart,
}

/// Most recent feature vectors per channel and when they were captured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureState {
    pub resp_recent: Vec<f64>,
    pub heart_recent: Vec<f64>,
    pub resp_baseline: Vec<f64>,
    pub heart_baseline: Vec<f64>,
    pub resp_ts_ms: i64,
    pub heart_ts_ms: i64,
    pub timeout_s: f64,
}

impl FeatureState {
    pub fn new(resp_baseline: Vec<f64>, heart_baseline: Vec<f64>, timeout_s: f64) -> Result<Self> {
        if !(timeout_s.is_finite() && timeout_s > 0.0) {
            return Err(Error::validation("feature timeout must be positive"));
        }
        Ok(FeatureState {
            resp_recent: resp_baseline.clone(),
            heart_recent: heart_baseline.clone(),
            resp_baseline,
            heart_baseline,
            resp_ts_ms: 0,
            heart_ts_ms: 0,
            timeout_s,
        })
    }

    /// Record an observation on one channel, then reset whichever channel
    /// has gone longer than the timeout without one.
    pub fn update(&mut self, channel: Channel, obs: &[f64], now_ms: i64) -> Result<()> {
        let (target, ts) = match channel {
            Channel::Respiration => (&mut self.resp_recent, &mut self.resp_ts_ms),
            Channel::Heart => (&mut self.heart_recent, &mut self.heart_ts_ms),
        };
        if obs.len() != target.len() {
            return Err(Error::validation(format!(
                "{channel:?} observation has dimension {}, expected {}",
                obs.len(),
                target.len()
            )));
        }
        target.copy_from_slice(obs);
        *ts = now_ms;
        self.expire(now_ms);
        Ok(())
    }

    /// Reset stale channels to their baselines.
    pub fn expire(&mut self, now_ms: i64) {
        let horizon_ms = self.timeout_s * 1000.0;
        if (now_ms - self.resp_ts_ms) as f64 > horizon_ms {
            self.resp_recent.clone_from(&self.resp_baseline);
        }
        if (now_ms - self.heart_ts_ms) as f64 > horizon_ms {
            self.heart_recent.clone_from(&self.heart_baseline);
        }
    }
}

/// Functional form of [`FeatureState::update`].
pub fn update_state(
    state: &FeatureState,
    channel: Channel,
    obs: &[f64],
    now_ms: i64,
) -> Result<FeatureState> {
    let mut next = state.clone();
    next.update(channel, obs, now_ms)?;
    Ok(next)
}

/// Row-major dense matrix, just big enough for feature maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::validation("ragged matrix rows"));
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| (0..self.cols).map(|c| self.get(r, c) * v[c]).sum())
            .collect()
    }
}

/// `Fr = T (H - MH) + MR`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    pub t: Matrix,
    pub mean_heart: Vec<f64>,
    pub mean_resp: Vec<f64>,
}

/// Solve `A X = B` for square `A` by Gauss-Jordan elimination with partial
/// pivoting. `B` has `nrhs` columns.
fn solve(a: &Matrix, b: &Matrix) -> Option<Matrix> {
    let n = a.rows;
    let mut a = a.clone();
    let mut b = b.clone();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))?;
        if a.get(piv, col).abs() < 1e-300 {
            return None;
        }
        if piv != col {
            for c in 0..n {
                let tmp = a.get(col, c);
                a.set(col, c, a.get(piv, c));
                a.set(piv, c, tmp);
            }
            for c in 0..b.cols {
                let tmp = b.get(col, c);
                b.set(col, c, b.get(piv, c));
                b.set(piv, c, tmp);
            }
        }
        let p = a.get(col, col);
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a.get(r, col) / p;
            if f == 0.0 {
                continue;
            }
            for c in 0..n {
                a.set(r, c, a.get(r, c) - f * a.get(col, c));
            }
            for c in 0..b.cols {
                b.set(r, c, b.get(r, c) - f * b.get(col, c));
            }
        }
    }
    for r in 0..n {
        let p = a.get(r, r);
        for c in 0..b.cols {
            b.set(r, c, b.get(r, c) / p);
        }
    }
    Some(b)
}

/// Reciprocal condition estimate below which the heart covariance gets a ridge.
const RIDGE_RCOND: f64 = 1e-12;

/// Least-squares linear predictor of respiration features from heart
/// features: `T = C_RH C_HH^-1`. A near-singular heart covariance gets a
/// ridge of `1e-6 * trace / dim` on its diagonal.
pub fn fit_map(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<LinearMap> {
    let (h0, r0) = pairs
        .first()
        .ok_or_else(|| Error::validation("fit_map needs training pairs"))?;
    let dh = h0.len();
    let dr = r0.len();
    if dh == 0 || dr == 0 {
        return Err(Error::validation("feature vectors must be non-empty"));
    }
    if pairs.len() < dh + 1 {
        return Err(Error::validation(format!(
            "fit_map needs at least {} pairs, got {}",
            dh + 1,
            pairs.len()
        )));
    }
    if pairs.iter().any(|(h, r)| h.len() != dh || r.len() != dr) {
        return Err(Error::validation("inconsistent feature dimensions"));
    }
    if pairs.iter().any(|(h, r)| h.iter().chain(r).any(|v| !v.is_finite())) {
        return Err(Error::validation("non-finite feature value"));
    }
    let n = pairs.len() as f64;
    let mut mh = vec![0.0; dh];
    let mut mr = vec![0.0; dr];
    for (h, r) in pairs {
        for (m, v) in mh.iter_mut().zip(h) {
            *m += v;
        }
        for (m, v) in mr.iter_mut().zip(r) {
            *m += v;
        }
    }
    mh.iter_mut().for_each(|m| *m /= n);
    mr.iter_mut().for_each(|m| *m /= n);

    let mut chh = Matrix::zeros(dh, dh);
    let mut crh = Matrix::zeros(dr, dh);
    for (h, r) in pairs {
        for i in 0..dh {
            let hi = h[i] - mh[i];
            for j in 0..dh {
                chh.data[i * dh + j] += hi * (h[j] - mh[j]) / n;
            }
            for k in 0..dr {
                crh.data[k * dh + i] += (r[k] - mr[k]) * hi / n;
            }
        }
    }

    let trace: f64 = (0..dh).map(|i| chh.get(i, i)).sum();
    let max_diag = (0..dh).map(|i| chh.get(i, i)).fold(0.0, f64::max);
    let mut a = chh.clone();
    let needs_ridge = max_diag <= 0.0 || {
        let det_scale = determinant(&chh).abs();
        det_scale <= RIDGE_RCOND * max_diag.powi(dh as i32)
    };
    if needs_ridge {
        let lambda = if trace > 0.0 { 1e-6 * trace / dh as f64 } else { 1e-6 };
        for i in 0..dh {
            a.set(i, i, a.get(i, i) + lambda);
        }
    }
    // T C_HH = C_RH  <=>  C_HH^T T^T = C_RH^T, and C_HH is symmetric.
    let crh_t = transpose(&crh);
    let t_t = solve(&a, &crh_t)
        .ok_or_else(|| Error::Numerical("singular heart covariance".into()))?;
    let t = transpose(&t_t);
    if t.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite linear map".into()));
    }
    Ok(LinearMap {
        t,
        mean_heart: mh,
        mean_resp: mr,
    })
}

fn transpose(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.cols, m.rows);
    for r in 0..m.rows {
        for c in 0..m.cols {
            out.set(c, r, m.get(r, c));
        }
    }
    out
}

fn determinant(m: &Matrix) -> f64 {
    let n = m.rows;
    let mut a = m.clone();
    let mut det = 1.0;
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a.get(i, col).abs().total_cmp(&a.get(j, col).abs()))
            .unwrap();
        let p = a.get(piv, col);
        if p == 0.0 {
            return 0.0;
        }
        if piv != col {
            det = -det;
            for c in 0..n {
                let tmp = a.get(col, c);
                a.set(col, c, a.get(piv, c));
                a.set(piv, c, tmp);
            }
        }
        det *= p;
        for r in col + 1..n {
            let f = a.get(r, col) / p;
            for c in col..n {
                a.set(r, c, a.get(r, c) - f * a.get(col, c));
            }
        }
    }
    det
}

impl LinearMap {
    pub fn apply(&self, heart: &[f64]) -> Result<Vec<f64>> {
        if heart.len() != self.t.cols {
            return Err(Error::validation(format!(
                "heart vector has dimension {}, map expects {}",
                heart.len(),
                self.t.cols
            )));
        }
        let centered: Vec<f64> = heart.iter().zip(&self.mean_heart).map(|(h, m)| h - m).collect();
        Ok(self
            .t
            .mul_vec(&centered)
            .into_iter()
            .zip(&self.mean_resp)
            .map(|(v, m)| v + m)
            .collect())
    }

    /// Largest absolute component deviation of `fr` from the respiration mean.
    pub fn skew(&self, fr: &[f64]) -> f64 {
        fr.iter()
            .zip(&self.mean_resp)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# linear feature map v1\n");
        let _ = writeln!(s, "shape {} {}", self.t.rows, self.t.cols);
        for r in 0..self.t.rows {
            let row: Vec<String> = (0..self.t.cols).map(|c| format!("{:?}", self.t.get(r, c))).collect();
            let _ = writeln!(s, "T {}", row.join(" "));
        }
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        let _ = writeln!(s, "MH {}", join(&self.mean_heart));
        let _ = writeln!(s, "MR {}", join(&self.mean_resp));
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut shape = None;
        let mut rows = Vec::new();
        let mut mh = None;
        let mut mr = None;
        for line in text.lines().map(str::trim) {
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let tag = it.next().unwrap_or_default();
            let nums = |it: std::str::SplitWhitespace<'_>| -> Result<Vec<f64>> {
                it.map(|t| t.parse::<f64>().map_err(|_| Error::validation(format!("bad number `{t}`"))))
                    .collect()
            };
            match tag {
                "shape" => {
                    let v = nums(it)?;
                    if v.len() != 2 {
                        return Err(Error::validation("shape needs two numbers"));
                    }
                    shape = Some((v[0] as usize, v[1] as usize));
                }
                "T" => rows.push(nums(it)?),
                "MH" => mh = Some(nums(it)?),
                "MR" => mr = Some(nums(it)?),
                other => return Err(Error::validation(format!("unknown map line `{other}`"))),
            }
        }
        let (nr, nc) = shape.ok_or_else(|| Error::validation("map file missing shape"))?;
        let t = Matrix::from_rows(&rows)?;
        let mh = mh.ok_or_else(|| Error::validation("map file missing MH"))?;
        let mr = mr.ok_or_else(|| Error::validation("map file missing MR"))?;
        if t.rows != nr || t.cols != nc || mh.len() != nc || mr.len() != nr {
            return Err(Error::validation("map file dimensions disagree with shape"));
        }
        Ok(LinearMap {
            t,
            mean_heart: mh,
            mean_resp: mr,
        })
    }
}

pub fn map_heart_to_resp(map: &LinearMap, heart: &[f64]) -> Result<Vec<f64>> {
    map.apply(heart)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureClass {
    Within,
    Skewed,
}

/// `Skewed` only when the skew strictly exceeds `tau`.
pub fn classify_feature_vector(map: &LinearMap, fr: &[f64], tau: f64) -> FeatureClass {
    if map.skew(fr) > tau {
        FeatureClass::Skewed
    } else {
        FeatureClass::Within
    }
}
