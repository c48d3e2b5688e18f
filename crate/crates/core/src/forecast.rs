//! One-step-ahead LSTM regression on a single vital series.
//!
//! The network takes one standardized value per step and predicts the next
//! one through a linear head on the hidden state. Training is full-sequence
//! backpropagation through time with global-norm gradient clipping and
//! adaptive-moment updates.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmConfig {
    pub hidden_units: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub grad_clip_norm: f64,
    pub lr_decay_factor: f64,
    /// Zero-based epoch from which the decayed learning rate applies.
    pub lr_decay_epoch: usize,
    pub rng_seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        LstmConfig {
            hidden_units: 100,
            epochs: 150,
            learning_rate: 0.005,
            grad_clip_norm: 1.0,
            lr_decay_factor: 0.2,
            lr_decay_epoch: 100,
            rng_seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if self.hidden_units == 0 || self.epochs == 0 || self.lr_decay_epoch == 0 {
            return Err(Error::validation("hidden_units, epochs and lr_decay_epoch must be positive"));
        }
        if !(pos(self.learning_rate) && pos(self.grad_clip_norm) && pos(self.lr_decay_factor)) {
            return Err(Error::validation(
                "learning_rate, grad_clip_norm and lr_decay_factor must be positive",
            ));
        }
        if self.lr_decay_epoch > self.epochs {
            return Err(Error::validation("lr_decay_epoch exceeds epochs"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mu: f64,
    pub sigma: f64,
}

impl Standardizer {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.sigma + self.mu
    }
}

/// Z-scores with population sigma; a constant series gets `sigma = 1`.
pub fn standardize(series: &[f64]) -> Result<(Vec<f64>, Standardizer)> {
    if series.is_empty() {
        return Err(Error::validation("cannot standardize an empty series"));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("series contains non-finite values"));
    }
    let n = series.len() as f64;
    let mu = series.iter().sum::<f64>() / n;
    let var = series.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
    let mut sigma = var.sqrt();
    if !(sigma > f64::EPSILON * mu.abs().max(1.0)) {
        sigma = 1.0;
    }
    let s = Standardizer { mu, sigma };
    Ok((series.iter().map(|&x| s.apply(x)).collect(), s))
}

pub fn destandardize(z: f64, s: &Standardizer) -> f64 {
    s.invert(z)
}

const GATES: usize = 4;
// Gate order within the parameter layout.
const GATE_I: usize = 0;
const GATE_F: usize = 1;
const GATE_G: usize = 2;
const GATE_O: usize = 3;

/// LSTM weights in one flat buffer. For each gate in order input, forget,
/// candidate, output: input weights (H), recurrent weights (H x H,
/// row-major), bias (H). Then the output head weights (H) and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    hidden: usize,
    params: Vec<f64>,
}

fn param_count(h: usize) -> usize {
    GATES * (h + h * h + h) + h + 1
}

impl LstmModel {
    pub fn zeros(hidden: usize) -> Self {
        LstmModel {
            hidden,
            params: vec![0.0; param_count(hidden)],
        }
    }

    /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights, zero biases except the forget
    /// gate bias at 1.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = 1.0 / (hidden as f64).sqrt();
        let mut m = LstmModel::zeros(hidden);
        for g in 0..GATES {
            for v in m.w_in_mut(g) {
                *v = rng.gen_range(-a..a);
            }
            for v in m.w_rec_mut(g) {
                *v = rng.gen_range(-a..a);
            }
            let b = if g == GATE_F { 1.0 } else { 0.0 };
            m.bias_mut(g).fill(b);
        }
        for v in m.head_w_mut() {
            *v = rng.gen_range(-a..a);
        }
        m
    }

    pub fn from_params(hidden: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != param_count(hidden) {
            return Err(Error::validation(format!(
                "expected {} parameters for hidden size {hidden}, got {}",
                param_count(hidden),
                params.len()
            )));
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("non-finite model parameter"));
        }
        Ok(LstmModel { hidden, params })
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn gate_base(&self, g: usize) -> usize {
        g * (2 * self.hidden + self.hidden * self.hidden)
    }

    pub fn w_in(&self, g: usize) -> &[f64] {
        let b = self.gate_base(g);
        &self.params[b..b + self.hidden]
    }

    pub fn w_in_mut(&mut self, g: usize) -> &mut [f64] {
        let (b, h) = (self.gate_base(g), self.hidden);
        &mut self.params[b..b + h]
    }

    pub fn w_rec(&self, g: usize) -> &[f64] {
        let b = self.gate_base(g) + self.hidden;
        &self.params[b..b + self.hidden * self.hidden]
    }

    pub fn w_rec_mut(&mut self, g: usize) -> &mut [f64] {
        let (b, h) = (self.gate_base(g) + self.hidden, self.hidden);
        &mut self.params[b..b + h * h]
    }

    pub fn bias(&self, g: usize) -> &[f64] {
        let b = self.gate_base(g) + self.hidden + self.hidden * self.hidden;
        &self.params[b..b + self.hidden]
    }

    pub fn bias_mut(&mut self, g: usize) -> &mut [f64] {
        let h = self.hidden;
        let b = self.gate_base(g) + h + h * h;
        &mut self.params[b..b + h]
    }

    fn head_base(&self) -> usize {
        self.gate_base(GATES)
    }

    pub fn head_w(&self) -> &[f64] {
        let b = self.head_base();
        &self.params[b..b + self.hidden]
    }

    pub fn head_w_mut(&mut self) -> &mut [f64] {
        let (b, h) = (self.head_base(), self.hidden);
        &mut self.params[b..b + h]
    }

    pub fn head_b(&self) -> f64 {
        self.params[self.head_base() + self.hidden]
    }

    pub fn set_head_b(&mut self, v: f64) {
        let i = self.head_base() + self.hidden;
        self.params[i] = v;
    }

    pub fn zero_state(&self) -> LstmState {
        LstmState {
            h: vec![0.0; self.hidden],
            c: vec![0.0; self.hidden],
        }
    }

    /// Head output for a hidden state.
    pub fn output(&self, state: &LstmState) -> f64 {
        dot(self.head_w(), &state.h) + self.head_b()
    }

    /// Advance `state` by one input and return the head output.
    pub fn step(&self, state: &mut LstmState, x: f64) -> f64 {
        let mut scratch = StepCache::new(self.hidden);
        self.step_cached(state, x, &mut scratch);
        self.output(state)
    }

    fn step_cached(&self, state: &mut LstmState, x: f64, cache: &mut StepCache) {
        let h = self.hidden;
        cache.x = x;
        cache.h_prev.copy_from_slice(&state.h);
        cache.c_prev.copy_from_slice(&state.c);
        for g in 0..GATES {
            let w = self.w_in(g);
            let u = self.w_rec(g);
            let b = self.bias(g);
            let act = &mut cache.gates[g];
            for r in 0..h {
                let pre = w[r] * x + dot(&u[r * h..(r + 1) * h], &cache.h_prev) + b[r];
                act[r] = if g == GATE_G { pre.tanh() } else { sigmoid(pre) };
            }
        }
        for r in 0..h {
            let c = cache.gates[GATE_F][r] * cache.c_prev[r]
                + cache.gates[GATE_I][r] * cache.gates[GATE_G][r];
            let tc = c.tanh();
            state.c[r] = c;
            state.h[r] = cache.gates[GATE_O][r] * tc;
            cache.tanh_c[r] = tc;
        }
        cache.h.copy_from_slice(&state.h);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone)]
struct StepCache {
    x: f64,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: [Vec<f64>; GATES],
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

impl StepCache {
    fn new(h: usize) -> Self {
        StepCache {
            x: 0.0,
            h_prev: vec![0.0; h],
            c_prev: vec![0.0; h],
            gates: std::array::from_fn(|_| vec![0.0; h]),
            tanh_c: vec![0.0; h],
            h: vec![0.0; h],
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Predictions at every step from a zero initial state, plus the final state.
pub fn lstm_forward(model: &LstmModel, inputs: &[f64]) -> Result<(Vec<f64>, LstmState)> {
    if inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("non-finite LSTM input"));
    }
    let mut state = model.zero_state();
    let mut cache = StepCache::new(model.hidden);
    let preds = inputs
        .iter()
        .map(|&x| {
            model.step_cached(&mut state, x, &mut cache);
            model.output(&state)
        })
        .collect();
    Ok((preds, state))
}

/// Mean squared error of the per-step predictions and its gradient with
/// respect to every parameter, in the model's flat layout.
pub fn lstm_gradients(model: &LstmModel, inputs: &[f64], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
    if inputs.len() != targets.len() {
        return Err(Error::validation("inputs and targets differ in length"));
    }
    let h = model.hidden;
    let mut grad = vec![0.0; model.params.len()];
    let n = inputs.len();
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut state = model.zero_state();
    let mut caches = Vec::with_capacity(n);
    let mut dys = Vec::with_capacity(n);
    let mut loss = 0.0;
    for (&x, &y) in inputs.iter().zip(targets) {
        let mut cache = StepCache::new(h);
        model.step_cached(&mut state, x, &mut cache);
        let err = model.output(&state) - y;
        loss += err * err;
        dys.push(2.0 * err / n as f64);
        caches.push(cache);
    }
    loss /= n as f64;

    let head_base = model.head_base();
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut da: [Vec<f64>; GATES] = std::array::from_fn(|_| vec![0.0; h]);
    let head_w = model.head_w().to_vec();
    for t in (0..n).rev() {
        let cache = &caches[t];
        let dy = dys[t];
        for r in 0..h {
            grad[head_base + r] += dy * cache.h[r];
        }
        grad[head_base + h] += dy;
        let [gi, gf, gg, go] = &cache.gates;
        for r in 0..h {
            let dh = dy * head_w[r] + dh_next[r];
            let tc = cache.tanh_c[r];
            let dc = dh * go[r] * (1.0 - tc * tc) + dc_next[r];
            da[GATE_O][r] = dh * tc * go[r] * (1.0 - go[r]);
            da[GATE_I][r] = dc * gg[r] * gi[r] * (1.0 - gi[r]);
            da[GATE_G][r] = dc * gi[r] * (1.0 - gg[r] * gg[r]);
            da[GATE_F][r] = dc * cache.c_prev[r] * gf[r] * (1.0 - gf[r]);
            dc_next[r] = dc * gf[r];
        }
        dh_next.fill(0.0);
        for (g, dag) in da.iter().enumerate() {
            let base = model.gate_base(g);
            let u = model.w_rec(g);
            for r in 0..h {
                let d = dag[r];
                grad[base + r] += d * cache.x;
                grad[base + h + h * h + r] += d;
                let row = base + h + r * h;
                let grow = &mut grad[row..row + h];
                for (gv, hp) in grow.iter_mut().zip(&cache.h_prev) {
                    *gv += d * hp;
                }
                let urow = &u[r * h..(r + 1) * h];
                for (dn, uv) in dh_next.iter_mut().zip(urow) {
                    *dn += d * uv;
                }
            }
        }
    }
    Ok((loss, grad))
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Rescale `grad` in place so its L2 norm is at most `max_norm`. Returns the
/// norm after clipping.
pub fn clip_gradient(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = l2_norm(grad);
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= scale);
        max_norm
    } else {
        norm
    }
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t);
        let bc2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            *p -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LstmModel,
    pub standardizer: Standardizer,
    /// Standardized training MSE at the start of each epoch.
    pub loss_curve: Vec<f64>,
    /// Gradient norm after clipping, per epoch.
    pub clipped_norms: Vec<f64>,
}

pub const MIN_TRAIN_LEN: usize = 3;

/// Fit a one-step-ahead model: inputs are `series[..n-1]`, targets
/// `series[1..]`, both standardized with the series' own statistics.
pub fn train(series: &[f64], config: &LstmConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if series.len() < MIN_TRAIN_LEN {
        return Err(Error::validation(format!(
            "training needs at least {MIN_TRAIN_LEN} points, got {}",
            series.len()
        )));
    }
    let (z, standardizer) = standardize(series)?;
    let inputs = &z[..z.len() - 1];
    let targets = &z[1..];
    let mut model = LstmModel::init(config.hidden_units, config.rng_seed);
    let mut adam = Adam::new(model.params.len());
    let mut loss_curve = Vec::with_capacity(config.epochs);
    let mut clipped_norms = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (loss, mut grad) = lstm_gradients(&model, inputs, targets)?;
        loss_curve.push(loss);
        clipped_norms.push(clip_gradient(&mut grad, config.grad_clip_norm));
        let lr = if epoch >= config.lr_decay_epoch {
            config.learning_rate * config.lr_decay_factor
        } else {
            config.learning_rate
        };
        adam.step(&mut model.params, &grad, lr);
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(format!("parameters diverged at epoch {epoch}")));
        }
    }
    Ok(TrainOutcome {
        model,
        standardizer,
        loss_curve,
        clipped_norms,
    })
}

/// Teacher-forced one-step predictions over `series`, in original units:
/// element `k` predicts `series[k + 1]`.
pub fn one_step_predictions(model: &LstmModel, s: &Standardizer, series: &[f64]) -> Vec<f64> {
    let mut state = model.zero_state();
    series
        .iter()
        .map(|&x| s.invert(model.step(&mut state, s.apply(x))))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecastMode {
    OpenLoop,
    WithUpdates,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastReport {
    pub predictions: Vec<f64>,
    /// Against observations; open-loop forecasts have none until scored.
    pub rmse: Option<f64>,
    pub mode: ForecastMode,
}

impl ForecastReport {
    pub fn score(mut self, actual: &[f64]) -> Result<Self> {
        self.rmse = Some(rmse(&self.predictions, actual)?);
        Ok(self)
    }
}

fn primed_state(model: &LstmModel, s: &Standardizer, prime: &[f64]) -> (LstmState, f64) {
    let mut state = model.zero_state();
    let mut next = model.output(&state);
    for &x in prime {
        next = model.step(&mut state, s.apply(x));
    }
    (state, next)
}

/// Reset, run through `seed_sequence`, then feed each prediction back as
/// the next input for `horizon` steps.
pub fn forecast_open_loop(
    model: &LstmModel,
    s: &Standardizer,
    seed_sequence: &[f64],
    horizon: usize,
) -> ForecastReport {
    let (mut state, mut next) = primed_state(model, s, seed_sequence);
    let mut predictions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        predictions.push(s.invert(next));
        next = model.step(&mut state, next);
    }
    ForecastReport {
        predictions,
        rmse: None,
        mode: ForecastMode::OpenLoop,
    }
}

/// Reset, run through `prime`, then predict each observation before
/// advancing the state with its true value.
pub fn forecast_with_updates(
    model: &LstmModel,
    s: &Standardizer,
    prime: &[f64],
    observed: &[f64],
) -> Result<ForecastReport> {
    if observed.is_empty() {
        return Err(Error::validation("forecast_with_updates needs observations"));
    }
    let (mut state, mut next) = primed_state(model, s, prime);
    let mut predictions = Vec::with_capacity(observed.len());
    for &obs in observed {
        predictions.push(s.invert(next));
        next = model.step(&mut state, s.apply(obs));
    }
    let r = rmse(&predictions, observed)?;
    Ok(ForecastReport {
        predictions,
        rmse: Some(r),
        mode: ForecastMode::WithUpdates,
    })
}

pub fn rmse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    if pred.len() != actual.len() {
        return Err(Error::validation(format!(
            "rmse length mismatch: {} vs {}",
            pred.len(),
            actual.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::validation("rmse of empty sequences"));
    }
    let mse = pred
        .iter()
        .zip(actual)
        .map(|(p, a)| (p - a).powi(2))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub hidden_units: usize,
    pub standardizer: Standardizer,
    /// Flat parameters, see [`LstmModel`] for the layout.
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn new(model: &LstmModel, standardizer: Standardizer) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            hidden_units: model.hidden,
            standardizer,
            params: model.params.clone(),
        }
    }

    pub fn into_parts(self) -> Result<(LstmModel, Standardizer)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::validation(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if !(self.standardizer.sigma > 0.0) {
            return Err(Error::validation("checkpoint standardizer sigma must be positive"));
        }
        Ok((LstmModel::from_params(self.hidden_units, self.params)?, self.standardizer))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

pub fn loss_curve_csv(curve: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in curve.iter().enumerate() {
        s.push_str(&format!("{},{:?}\n", i + 1, l));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardize_examples() {
        let (z, s) = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(s.mu, 2.0);
        assert!((s.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((z[0] + 1.224744871391589).abs() < 1e-12);
        let (z, s) = standardize(&[5.0, 5.0]).unwrap();
        assert_eq!(s.sigma, 1.0);
        assert_eq!(z, vec![0.0, 0.0]);
        assert!(standardize(&[]).is_err());
    }

    #[test]
    fn zero_model_predicts_output_bias() {
        let mut m = LstmModel::zeros(3);
        m.set_head_b(0.7);
        let (p, _) = lstm_forward(&m, &[1.0, -2.0, 5.0]).unwrap();
        assert_eq!(p, vec![0.7; 3]);
    }

    #[test]
    fn single_step_hand_computed() {
        // H = 1: weights wi=0.5 wf=-0.3 wg=0.8 wo=0.1, recurrent irrelevant
        // for the first step, biases 0.1 0.2 -0.1 0.05, head 1.5 / -0.2.
        let mut m = LstmModel::zeros(1);
        let w = [0.5, -0.3, 0.8, 0.1];
        let b = [0.1, 0.2, -0.1, 0.05];
        for g in 0..4 {
            m.w_in_mut(g)[0] = w[g];
            m.w_rec_mut(g)[0] = 0.37;
            m.bias_mut(g)[0] = b[g];
        }
        m.head_w_mut()[0] = 1.5;
        m.set_head_b(-0.2);
        let x: f64 = 0.9;
        let s = |v: f64| 1.0 / (1.0 + (-v).exp());
        let i = s(0.5 * x + 0.1);
        let g = (0.8 * x - 0.1).tanh();
        let o = s(0.1 * x + 0.05);
        let c = i * g;
        let h = o * c.tanh();
        let y = 1.5 * h - 0.2;
        let (p, st) = lstm_forward(&m, &[x]).unwrap();
        assert!((p[0] - y).abs() < 1e-12);
        assert!((st.c[0] - c).abs() < 1e-12);
        assert!((st.h[0] - h).abs() < 1e-12);
    }

    #[test]
    fn forward_is_deterministic() {
        let m = LstmModel::init(5, 3);
        let a = lstm_forward(&m, &[0.1, 0.2, 0.3]).unwrap();
        let b = lstm_forward(&m, &[0.1, 0.2, 0.3]).unwrap();
        assert_eq!(a, b);
        assert!(lstm_forward(&m, &[f64::NAN]).is_err());
    }

    #[test]
    fn empty_sequence_has_zero_gradient() {
        let m = LstmModel::init(4, 1);
        let (loss, g) = lstm_gradients(&m, &[], &[]).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
        assert!(lstm_gradients(&m, &[1.0], &[]).is_err());
    }

    #[test]
    fn clip_to_unit_norm() {
        let mut g = vec![6.0, 8.0];
        assert!((l2_norm(&g) - 10.0).abs() < 1e-12);
        let n = clip_gradient(&mut g, 1.0);
        assert_eq!(n, 1.0);
        assert!((l2_norm(&g) - 1.0).abs() < 1e-9);
        let mut small = vec![0.1, 0.1];
        clip_gradient(&mut small, 1.0);
        assert_eq!(small, vec![0.1, 0.1]);
    }

    #[test]
    fn rmse_examples() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(rmse(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rmse(&[0.0], &[3.0]).unwrap(), 3.0);
        assert!(rmse(&[], &[]).is_err());
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(LstmConfig::default().validate().is_ok());
        let bad = LstmConfig {
            lr_decay_epoch: 200,
            ..LstmConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = LstmConfig {
            learning_rate: 0.0,
            ..LstmConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn train_rejects_short_series() {
        assert!(train(&[1.0, 2.0], &LstmConfig::default()).is_err());
    }

    #[test]
    fn open_loop_prefix_and_empty_horizon() {
        let m = LstmModel::init(6, 9);
        let s = Standardizer { mu: 1.0, sigma: 2.0 };
        let seed = [0.5, 1.0, 1.5];
        assert!(forecast_open_loop(&m, &s, &seed, 0).predictions.is_empty());
        let one = forecast_open_loop(&m, &s, &seed, 1);
        let five = forecast_open_loop(&m, &s, &seed, 5);
        assert_eq!(one.predictions[0], five.predictions[0]);
        assert_eq!(five.predictions.len(), 5);
    }

    #[test]
    fn with_updates_on_own_open_loop_output_is_exact() {
        let m = LstmModel::init(6, 11);
        let s = Standardizer { mu: 0.0, sigma: 1.0 };
        let seed = [0.2, -0.4, 0.9];
        let ol = forecast_open_loop(&m, &s, &seed, 8);
        let wu = forecast_with_updates(&m, &s, &seed, &ol.predictions).unwrap();
        assert!(wu.rmse.unwrap() < 1e-12);
        let single = forecast_with_updates(&m, &s, &seed, &[3.0]).unwrap();
        assert_eq!(single.predictions.len(), 1);
        assert_eq!(single.rmse.unwrap(), (single.predictions[0] - 3.0).abs());
        assert!(forecast_with_updates(&m, &s, &seed, &[]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = LstmModel::init(3, 5);
        let s = Standardizer { mu: 36.6, sigma: 0.3 };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        Checkpoint::new(&m, s).save(&p).unwrap();
        let (m2, s2) = Checkpoint::load(&p).unwrap().into_parts().unwrap();
        assert_eq!(m2, m);
        assert_eq!(s2, s);
    }
}
