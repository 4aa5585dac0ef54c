//! Single-hidden-layer perceptron with one sigmoid output.
//!
//! `input -> ReLU(W1·x + b1) -> sigmoid(w2·h + b2)`, trained on mean binary
//! cross-entropy with plain SGD or Adam.
//!
//! Parameters live in one flat buffer ordered `W1 (row-major, H×I), b1, W2,
//! b2`, which is also the order of the model file:
//!
//! ```text
//! "MSNN"  version:u32  input:u32  hidden:u32  output:u32   then f64 × param_count
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed;

/// Probability clamp used by the loss.
pub const PROB_EPS: f64 = 1e-12;

const MODEL_MAGIC: &[u8; 4] = b"MSNN";
const MODEL_VERSION: u32 = 1;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("expected an input of length {expected}, got {found}")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("{left} predictions but {right} labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("loss became non-finite during epoch {epoch}")]
    NonFiniteLoss {
        epoch: usize,
        /// Parameters at the end of the best completed epoch.
        best: Box<MlpModel>,
        history: Vec<EpochStats>,
    },
    #[error("malformed model file: {0}")]
    BadModelFile(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MlpArchitecture {
    pub input_size: usize,
    pub hidden_size: usize,
    pub output_size: usize,
}

impl MlpArchitecture {
    pub fn new(input_size: usize, hidden_size: usize) -> Result<Self, MlpError> {
        if input_size == 0 || hidden_size == 0 {
            return Err(MlpError::InvalidArchitecture(format!(
                "{input_size}-{hidden_size}-1 has an empty layer"
            )));
        }
        Ok(Self {
            input_size,
            hidden_size,
            output_size: 1,
        })
    }

    pub fn param_count(&self) -> usize {
        self.hidden_size * self.input_size + 2 * self.hidden_size + 1
    }

    fn w1_len(&self) -> usize {
        self.hidden_size * self.input_size
    }
}

impl std::fmt::Display for MlpArchitecture {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}-{}", self.input_size, self.hidden_size, self.output_size)
    }
}

/// Splits a flat buffer into `(W1, b1, W2, b2)` views.
fn split<'a>(arch: &MlpArchitecture, buf: &'a [f64]) -> (&'a [f64], &'a [f64], &'a [f64], f64) {
    let (w1, rest) = buf.split_at(arch.w1_len());
    let (b1, rest) = rest.split_at(arch.hidden_size);
    let (w2, rest) = rest.split_at(arch.hidden_size);
    (w1, b1, w2, rest[0])
}

fn split_mut<'a>(
    arch: &MlpArchitecture,
    buf: &'a mut [f64],
) -> (&'a mut [f64], &'a mut [f64], &'a mut [f64], &'a mut f64) {
    let (w1, rest) = buf.split_at_mut(arch.w1_len());
    let (b1, rest) = rest.split_at_mut(arch.hidden_size);
    let (w2, rest) = rest.split_at_mut(arch.hidden_size);
    (w1, b1, w2, &mut rest[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    arch: MlpArchitecture,
    params: Vec<f64>,
}

/// Accumulator count of [`dot`]. Fixed, so the summation order (and hence
/// every result bit) is the same whichever instruction set runs it.
const LANES: usize = 16;

#[inline(always)]
fn dot_kernel(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        let x: &[f64; LANES] = x.try_into().unwrap();
        let y: &[f64; LANES] = y.try_into().unwrap();
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    let mut width = LANES;
    while width > 1 {
        width /= 2;
        for l in 0..width {
            acc[l] += acc[l + width];
        }
    }
    let tail: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
    acc[0] + tail
}

#[inline(always)]
fn axpy_kernel(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    #[target_feature(enable = "avx2")]
    pub(super) fn dot(a: &[f64], b: &[f64]) -> f64 {
        super::dot_kernel(a, b)
    }

    #[target_feature(enable = "avx2")]
    pub(super) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
        super::axpy_kernel(alpha, x, y)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::dot(a, b) };
    }
    dot_kernel(a, b)
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: the CPU supports AVX2.
        return unsafe { avx2::axpy(alpha, x, y) };
    }
    axpy_kernel(alpha, x, y)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn bce(p: f64, y: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

impl MlpModel {
    /// All-zero parameters.
    pub fn zeros(arch: MlpArchitecture) -> Self {
        Self {
            arch,
            params: vec![0.0; arch.param_count()],
        }
    }

    /// He-uniform `W1`, Xavier-uniform `W2`, zero biases.
    pub fn init(arch: MlpArchitecture, seed: u64) -> Self {
        let mut model = Self::zeros(arch);
        let mut rng = seed::rng(seed);
        let he = (6.0 / arch.input_size as f64).sqrt();
        let xavier = (6.0 / (arch.hidden_size + arch.output_size) as f64).sqrt();
        let (w1, _, w2, _) = split_mut(&arch, &mut model.params);
        w1.iter_mut().for_each(|w| *w = rng.random_range(-he..he));
        w2.iter_mut().for_each(|w| *w = rng.random_range(-xavier..xavier));
        model
    }

    pub fn from_params(arch: MlpArchitecture, params: Vec<f64>) -> Result<Self, MlpError> {
        if params.len() != arch.param_count() {
            return Err(MlpError::ShapeMismatch {
                expected: arch.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn architecture(&self) -> MlpArchitecture {
        self.arch
    }

    /// Flat parameter buffer in `W1, b1, W2, b2` order.
    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn w1(&self) -> &[f64] {
        split(&self.arch, &self.params).0
    }

    pub fn b1(&self) -> &[f64] {
        split(&self.arch, &self.params).1
    }

    pub fn w2(&self) -> &[f64] {
        split(&self.arch, &self.params).2
    }

    pub fn b2(&self) -> f64 {
        split(&self.arch, &self.params).3
    }

    fn check_input(&self, x: &[f64]) -> Result<(), MlpError> {
        if x.len() == self.arch.input_size {
            Ok(())
        } else {
            Err(MlpError::ShapeMismatch {
                expected: self.arch.input_size,
                found: x.len(),
            })
        }
    }

    /// Fills `pre` with hidden pre-activations and returns the output logit.
    fn logit_into(&self, x: &[f64], pre: &mut [f64]) -> f64 {
        let (w1, b1, w2, b2) = split(&self.arch, &self.params);
        let mut z2 = b2;
        for (j, (row, z)) in w1.chunks_exact(self.arch.input_size).zip(pre.iter_mut()).enumerate() {
            *z = dot(row, x) + b1[j];
            if *z > 0.0 {
                z2 += w2[j] * *z;
            }
        }
        z2
    }

    /// Probability of the MEDICATION class.
    pub fn forward(&self, x: &[f64]) -> Result<f64, MlpError> {
        self.check_input(x)?;
        let mut pre = vec![0.0; self.arch.hidden_size];
        Ok(sigmoid(self.logit_into(x, &mut pre)))
    }

    /// 1 iff `forward(x) >= threshold`.
    pub fn predict(&self, x: &[f64], threshold: f64) -> Result<u8, MlpError> {
        Ok(u8::from(self.forward(x)? >= threshold))
    }

    pub fn save(&self, out: &mut impl Write) -> Result<(), MlpError> {
        out.write_all(MODEL_MAGIC)?;
        out.write_all(&MODEL_VERSION.to_le_bytes())?;
        for dim in [self.arch.input_size, self.arch.hidden_size, self.arch.output_size] {
            let dim = u32::try_from(dim)
                .map_err(|_| MlpError::InvalidArchitecture(format!("dimension {dim} too large")))?;
            out.write_all(&dim.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * self.params.len());
        for p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        out.write_all(&buf)?;
        Ok(())
    }

    pub fn load(input: &mut impl Read) -> Result<Self, MlpError> {
        let mut head = [0u8; 20];
        input.read_exact(&mut head)?;
        if &head[..4] != MODEL_MAGIC {
            return Err(MlpError::BadModelFile("bad magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(head[4 * i..4 * i + 4].try_into().unwrap());
        if word(1) != MODEL_VERSION {
            return Err(MlpError::BadModelFile(format!("unsupported version {}", word(1))));
        }
        if word(4) != 1 {
            return Err(MlpError::BadModelFile(format!("output size {} != 1", word(4))));
        }
        let arch = MlpArchitecture::new(word(2) as usize, word(3) as usize)?;
        let mut raw = vec![0u8; 8 * arch.param_count()];
        input.read_exact(&mut raw)?;
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self { arch, params })
    }
}

/// Mean binary cross-entropy with probabilities clamped to `[ε, 1-ε]`.
pub fn loss(probabilities: &[f64], labels: &[f64]) -> Result<f64, MlpError> {
    if probabilities.len() != labels.len() {
        return Err(MlpError::LengthMismatch {
            left: probabilities.len(),
            right: labels.len(),
        });
    }
    if probabilities.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    let total: f64 = probabilities.iter().zip(labels).map(|(&p, &y)| bce(p, y)).sum();
    Ok(total / probabilities.len() as f64)
}

/// Parameter gradients, laid out like [`MlpModel::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    arch: MlpArchitecture,
    values: Vec<f64>,
}

impl Gradients {
    fn zeros(arch: MlpArchitecture) -> Self {
        Self {
            arch,
            values: vec![0.0; arch.param_count()],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn w1(&self) -> &[f64] {
        split(&self.arch, &self.values).0
    }

    pub fn b1(&self) -> &[f64] {
        split(&self.arch, &self.values).1
    }

    pub fn w2(&self) -> &[f64] {
        split(&self.arch, &self.values).2
    }

    pub fn b2(&self) -> f64 {
        split(&self.arch, &self.values).3
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

/// Reusable buffers for one backward pass. `pre` and `delta` hold one
/// hidden vector per batch element.
struct Workspace {
    pre: Vec<f64>,
    delta: Vec<f64>,
    grad: Gradients,
}

impl Workspace {
    fn new(arch: MlpArchitecture) -> Self {
        Self {
            pre: Vec::new(),
            delta: Vec::new(),
            grad: Gradients::zeros(arch),
        }
    }
}

/// Totals for one batch pass.
#[derive(Debug, Default, Clone, Copy)]
struct BatchTotals {
    loss: f64,
    correct: usize,
}

/// Accumulates the gradient of the mean loss over `batch` into `ws.grad`
/// (overwriting it). The logit gradient is `p - y`; the clamp only guards the
/// reported loss value. ReLU's subgradient at 0 is taken as 0.
///
/// Both passes walk `W1` row by row over the whole batch, so each row is
/// loaded once per batch rather than once per sample.
fn accumulate(
    model: &MlpModel,
    inputs: &[&[f64]],
    labels: &[f64],
    batch: &[usize],
    ws: &mut Workspace,
) -> BatchTotals {
    let arch = model.arch;
    let (n_in, h) = (arch.input_size, arch.hidden_size);
    let b = batch.len();
    let (w1, b1, w2, b2) = split(&arch, &model.params);
    ws.grad.values.fill(0.0);
    ws.pre.resize(b * h, 0.0);
    ws.delta.resize(b * h, 0.0);
    let (gw1, gb1, gw2, gb2) = split_mut(&arch, &mut ws.grad.values);
    let scale = 1.0 / b as f64;
    let mut totals = BatchTotals::default();

    for (j, row) in w1.chunks_exact(n_in).enumerate() {
        for (k, &i) in batch.iter().enumerate() {
            ws.pre[k * h + j] = dot(row, inputs[i]) + b1[j];
        }
    }

    for (k, &i) in batch.iter().enumerate() {
        let pre = &ws.pre[k * h..(k + 1) * h];
        let z2 = pre
            .iter()
            .zip(w2)
            .filter(|(z, _)| **z > 0.0)
            .fold(b2, |acc, (z, w)| acc + w * z);
        let (p, y) = (sigmoid(z2), labels[i]);
        totals.loss += bce(p, y);
        totals.correct += usize::from((p >= 0.5) == (y >= 0.5));

        let d_logit = (p - y) * scale;
        *gb2 += d_logit;
        let delta = &mut ws.delta[k * h..(k + 1) * h];
        for j in 0..h {
            delta[j] = if pre[j] > 0.0 {
                gw2[j] += d_logit * pre[j];
                d_logit * w2[j]
            } else {
                0.0
            };
        }
    }

    for (j, grow) in gw1.chunks_exact_mut(n_in).enumerate() {
        for (k, &i) in batch.iter().enumerate() {
            let d = ws.delta[k * h + j];
            if d != 0.0 {
                gb1[j] += d;
                axpy(d, inputs[i], grow);
            }
        }
    }
    totals
}

fn check_batch(model: &MlpModel, inputs: &[&[f64]], labels: &[f64]) -> Result<(), MlpError> {
    if inputs.len() != labels.len() {
        return Err(MlpError::LengthMismatch {
            left: inputs.len(),
            right: labels.len(),
        });
    }
    if inputs.is_empty() {
        return Err(MlpError::EmptyBatch);
    }
    inputs.iter().try_for_each(|x| model.check_input(x))
}

/// Exact gradient of the mean loss over a batch.
pub fn gradient(model: &MlpModel, inputs: &[&[f64]], labels: &[f64]) -> Result<Gradients, MlpError> {
    check_batch(model, inputs, labels)?;
    let mut ws = Workspace::new(model.arch);
    let all: Vec<usize> = (0..inputs.len()).collect();
    accumulate(model, inputs, labels, &all, &mut ws);
    Ok(ws.grad)
}

/// Mean loss and accuracy (threshold 0.5) of `model` on a labeled set.
pub fn evaluate(model: &MlpModel, inputs: &[&[f64]], labels: &[f64]) -> Result<(f64, f64), MlpError> {
    check_batch(model, inputs, labels)?;
    let mut pre = vec![0.0; model.arch.hidden_size];
    let (mut total, mut correct) = (0.0, 0usize);
    for (x, &y) in inputs.iter().zip(labels) {
        let p = sigmoid(model.logit_into(x, &mut pre));
        total += bce(p, y);
        correct += usize::from((p >= 0.5) == (y >= 0.5));
    }
    let n = inputs.len() as f64;
    Ok((total / n, correct as f64 / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
    pub shuffle: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            optimizer: Optimizer::Adam,
            seed: 0,
            shuffle: true,
        }
    }
}

impl TrainConfig {
    /// A zero learning rate is accepted: it turns training into a no-op pass.
    pub fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(MlpError::InvalidConfig("learning_rate must be finite and >= 0".into()));
        }
        if self.epochs == 0 {
            return Err(MlpError::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(MlpError::InvalidConfig("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, measured before each update.
    pub loss: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochStats>,
}

enum OptimizerState {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, step: i32 },
}

impl OptimizerState {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam => OptimizerState::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                step: 0,
            },
        }
    }

    /// Applies one update; returns whether every parameter is still finite.
    fn apply(&mut self, params: &mut [f64], grad: &[f64], lr: f64) -> bool {
        let mut finite = true;
        match self {
            OptimizerState::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= lr * g;
                    finite &= p.is_finite();
                }
            }
            OptimizerState::Adam { m, v, step } => {
                *step += 1;
                let c1 = 1.0 - ADAM_BETA1.powi(*step);
                let c2 = 1.0 - ADAM_BETA2.powi(*step);
                for (((p, g), m), v) in params.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    finite &= p.is_finite();
                }
            }
        }
        finite
    }
}

/// Mini-batch training. Deterministic for a given `config.seed`.
///
/// If the loss or any parameter becomes non-finite the run stops with
/// [`MlpError::NonFiniteLoss`], carrying the best completed epoch's model.
pub fn train(
    model: MlpModel,
    inputs: &[&[f64]],
    labels: &[f64],
    config: &TrainConfig,
) -> Result<TrainOutcome, MlpError> {
    config.validate()?;
    check_batch(&model, inputs, labels)?;

    let mut model = model;
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut ws = Workspace::new(model.arch);
    let mut opt = OptimizerState::new(config.optimizer, model.params.len());
    let mut history = Vec::with_capacity(config.epochs);
    let mut best = (f64::INFINITY, model.clone());

    for epoch in 1..=config.epochs {
        if config.shuffle {
            order.shuffle(&mut rng);
        }
        let mut totals = BatchTotals::default();
        let mut healthy = true;
        for batch in order.chunks(config.batch_size) {
            let t = accumulate(&model, inputs, labels, batch, &mut ws);
            totals.loss += t.loss;
            totals.correct += t.correct;
            healthy &= t.loss.is_finite();
            healthy &= opt.apply(&mut model.params, &ws.grad.values, config.learning_rate);
            if !healthy {
                break;
            }
        }
        if !healthy {
            return Err(MlpError::NonFiniteLoss {
                epoch,
                best: Box::new(best.1),
                history,
            });
        }
        let n = inputs.len() as f64;
        let stats = EpochStats {
            epoch,
            loss: totals.loss / n,
            train_accuracy: totals.correct as f64 / n,
        };
        if stats.loss < best.0 {
            best = (stats.loss, model.clone());
        }
        history.push(stats);
    }
    Ok(TrainOutcome { model, history })
}

/// `epoch,loss,train_accuracy` with a header row.
pub fn history_csv(history: &[EpochStats]) -> String {
    let mut out = String::from("epoch,loss,train_accuracy\n");
    for h in history {
        out.push_str(&format!("{},{},{}\n", h.epoch, h.loss, h.train_accuracy));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(i: usize, h: usize) -> MlpArchitecture {
        MlpArchitecture::new(i, h).unwrap()
    }

    #[test]
    fn full_width_param_count() {
        let model = MlpModel::init(arch(4500, 90), 3);
        assert_eq!(model.params().len(), 405_181);
    }

    #[test]
    fn init_is_seeded_with_zero_biases() {
        let a = MlpModel::init(arch(3, 2), 42);
        assert_eq!(a, MlpModel::init(arch(3, 2), 42));
        assert_ne!(a, MlpModel::init(arch(3, 2), 43));
        assert_eq!(a.b1(), &[0.0, 0.0]);
        assert_eq!(a.b2(), 0.0);
        let he = (6.0f64 / 3.0).sqrt();
        assert!(a.w1().iter().all(|w| w.abs() < he));
        let xavier = (6.0f64 / 3.0).sqrt();
        assert!(a.w2().iter().all(|w| w.abs() < xavier));
    }

    #[test]
    fn analytic_forward_cases() {
        let zero = MlpModel::zeros(arch(5, 3));
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0, 0.5, 9.0]).unwrap(), 0.5);
        assert_eq!(zero.predict(&[0.0; 5], 0.5).unwrap(), 1);
        assert_eq!(zero.predict(&[0.0; 5], 1.0).unwrap(), 0);

        let one = MlpModel::from_params(arch(1, 1), vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert_eq!(one.forward(&[-5.0]).unwrap(), 0.5);
        assert!((one.forward(&[2.0]).unwrap() - sigmoid(2.0)).abs() < 1e-15);

        assert!(matches!(
            zero.forward(&[1.0]),
            Err(MlpError::ShapeMismatch { expected: 5, found: 1 })
        ));
    }

    #[test]
    fn loss_values() {
        assert!((loss(&[0.5], &[1.0]).unwrap() - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(loss(&[1.0 - PROB_EPS], &[1.0]).unwrap() < 1e-11);
        assert!(loss(&[1.0], &[0.0]).unwrap().is_finite());
        assert!(matches!(loss(&[0.5], &[]), Err(MlpError::LengthMismatch { .. })));
        assert!(matches!(loss(&[], &[]), Err(MlpError::EmptyBatch)));
    }

    #[test]
    fn saturated_correct_batch_has_tiny_gradient() {
        let mut model = MlpModel::zeros(arch(2, 2));
        model.params_mut()[8] = 40.0; // b2: logit 40, p = 1 - 4e-18
        let x = [0.3, -0.2];
        let g = gradient(&model, &[&x, &x], &[1.0, 1.0]).unwrap();
        assert!(g.norm() < 1e-6);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let model = MlpModel::init(arch(4, 3), 9);
        let a = [0.1, 0.5, -0.3, 1.2];
        let b = [-0.7, 0.2, 0.9, -1.1];
        let once = gradient(&model, &[&a, &b], &[1.0, 0.0]).unwrap();
        let twice = gradient(&model, &[&a, &b, &a, &b], &[1.0, 0.0, 1.0, 0.0]).unwrap();
        for (x, y) in once.values().iter().zip(twice.values()) {
            assert!((x - y).abs() <= 1e-15 * x.abs().max(1.0));
        }
    }

    #[test]
    fn zero_learning_rate_leaves_model_untouched() {
        let model = MlpModel::init(arch(3, 4), 5);
        let xs = [[0.1, 0.2, 0.3], [1.0, -1.0, 0.5], [0.0, 0.3, -0.2]];
        let inputs: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        let config = TrainConfig {
            learning_rate: 0.0,
            epochs: 1,
            ..Default::default()
        };
        for optimizer in [Optimizer::Adam, Optimizer::Sgd] {
            let cfg = TrainConfig { optimizer, ..config };
            let out = train(model.clone(), &inputs, &[1.0, 0.0, 1.0], &cfg).unwrap();
            let same = out
                .model
                .params()
                .iter()
                .zip(model.params())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same);
            assert_eq!(out.history.len(), 1);
        }
    }

    #[test]
    fn diverging_training_reports_non_finite_loss() {
        let model = MlpModel::init(arch(2, 2), 1);
        let xs = [[1e300, -1e300], [-1e300, 1e300]];
        let inputs: Vec<&[f64]> = xs.iter().map(|x| &x[..]).collect();
        let cfg = TrainConfig {
            learning_rate: 1e300,
            optimizer: Optimizer::Sgd,
            epochs: 5,
            ..Default::default()
        };
        match train(model.clone(), &inputs, &[1.0, 0.0], &cfg) {
            Err(MlpError::NonFiniteLoss { epoch, best, history }) => {
                assert_eq!(history.len(), epoch - 1);
                assert!(best.params().iter().all(|p| p.is_finite()));
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn invalid_config_is_rejected() {
        let model = MlpModel::zeros(arch(1, 1));
        let x = [0.0];
        for cfg in [
            TrainConfig { epochs: 0, ..Default::default() },
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { learning_rate: -1.0, ..Default::default() },
        ] {
            assert!(matches!(
                train(model.clone(), &[&x], &[1.0], &cfg),
                Err(MlpError::InvalidConfig(_))
            ));
        }
    }

    #[test]
    fn save_load_is_bit_exact() {
        let model = MlpModel::init(arch(7, 5), 77);
        let mut bytes = Vec::new();
        model.save(&mut bytes).unwrap();
        assert_eq!(&bytes[..4], b"MSNN");
        assert_eq!(bytes.len(), 20 + 8 * model.params().len());
        let back = MlpModel::load(&mut bytes.as_slice()).unwrap();
        assert_eq!(back, model);
        let x = [0.3, -1.0, 2.0, 0.0, 0.1, 0.7, -0.4];
        assert_eq!(back.forward(&x).unwrap().to_bits(), model.forward(&x).unwrap().to_bits());

        bytes[0] = b'X';
        assert!(matches!(
            MlpModel::load(&mut bytes.as_slice()),
            Err(MlpError::BadModelFile(_))
        ));
    }

    #[test]
    fn dispatched_kernels_match_portable_ones() {
        let mut rng = seed::rng(4);
        for n in [0, 1, 15, 16, 17, 100, 1500] {
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(dot(&a, &b).to_bits(), dot_kernel(&a, &b).to_bits());
            let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
            assert!((dot(&a, &b) - naive).abs() < 1e-12);
            let (mut y1, mut y2) = (b.clone(), b.clone());
            axpy(0.37, &a, &mut y1);
            axpy_kernel(0.37, &a, &mut y2);
            assert_eq!(y1, y2);
        }
    }

    #[test]
    fn history_csv_format() {
        let csv = history_csv(&[EpochStats { epoch: 1, loss: 0.5, train_accuracy: 0.75 }]);
        assert_eq!(csv, "epoch,loss,train_accuracy\n1,0.5,0.75\n");
    }
}
