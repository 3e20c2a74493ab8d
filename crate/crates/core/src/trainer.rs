//! Temperature-scaled triplet training.
//!
//! Per triplet the loss is the two-way softmax negative log-likelihood of
//! the positive against the hard negative:
//!
//! ```text
//! L = -log( exp(c_sp/τ) / (exp(c_sp/τ) + exp(c_sn/τ)) ) = softplus((c_sn - c_sp)/τ)
//! ```
//!
//! with `c_sp = cos(h_s, h_p)` and `c_sn = cos(h_s, h_n)`. Only the explicit
//! hard negative enters the denominator; there are no in-batch negatives.
//! Optimisation is AdamW with linear warm-up to a constant learning rate.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{backward_from_trace, encode_traced, EncodeTrace, EncoderError, EncoderParams, RowGrads};
use crate::mining::Triplet;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),
    #[error("temperature must be positive, got {0}")]
    Temperature(f64),
    #[error("step {t} outside 1..={total}")]
    StepOutOfRange { t: usize, total: usize },
    #[error("no triplets to train on")]
    Empty,
    #[error("shape mismatch: params {params}, grads {grads}, state {state}")]
    Shape { params: usize, grads: usize, state: usize },
    #[error("non-finite gradient at optimizer step {step}, index {index}")]
    NonFiniteGradient { step: u64, index: usize },
    #[error("non-finite loss at step {step} (triplets {triplets:?})")]
    NonFiniteLoss { step: usize, triplets: Vec<usize> },
    #[error("triplet {index}: {source}")]
    Encode {
        index: usize,
        #[source]
        source: EncoderError,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub tau: f64,
    pub base_lr: f64,
    pub warmup_fraction: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            tau: 0.05,
            base_lr: 5e-5,
            warmup_fraction: 0.10,
            batch_size: 32,
            epochs: 1,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(TrainError::Temperature(self.tau));
        }
        let bad = |m: String| Err(TrainError::Config(m));
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return bad(format!("warmup_fraction must lie in [0, 1], got {}", self.warmup_fraction));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1".into());
        }
        if !(self.base_lr >= 0.0) || !(self.weight_decay >= 0.0) {
            return bad("base_lr and weight_decay must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.eps > 0.0) {
            return bad("need beta1, beta2 in [0, 1) and eps > 0".into());
        }
        Ok(())
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `softplus((cos_sn - cos_sp) / tau)`.
pub fn triplet_loss(cos_sp: f64, cos_sn: f64, tau: f64) -> Result<f64, TrainError> {
    if !(tau > 0.0) {
        return Err(TrainError::Temperature(tau));
    }
    Ok(softplus((cos_sn - cos_sp) / tau))
}

/// `(dL/dcos_sp, dL/dcos_sn) = (-σ(Δ)/τ, σ(Δ)/τ)` with `Δ = (cos_sn - cos_sp)/τ`.
pub fn triplet_loss_grads(cos_sp: f64, cos_sn: f64, tau: f64) -> Result<(f64, f64), TrainError> {
    if !(tau > 0.0) {
        return Err(TrainError::Temperature(tau));
    }
    let g = sigmoid((cos_sn - cos_sp) / tau) / tau;
    Ok((-g, g))
}

/// Number of warm-up steps, `ceil(warmup_fraction · total)`. A tolerance
/// keeps products like `0.1 · 30 = 3.0000000000000004` from rounding up.
pub fn warmup_steps(total_steps: usize, warmup_fraction: f64) -> usize {
    let raw = warmup_fraction * total_steps as f64;
    (raw - 1e-9 * raw.max(1.0)).ceil().max(0.0) as usize
}

/// Linear warm-up over the first `warmup_steps` steps, constant after.
pub fn lr_at_step(t: usize, total_steps: usize, config: &TrainConfig) -> Result<f64, TrainError> {
    if t == 0 || t > total_steps {
        return Err(TrainError::StepOutOfRange { t, total: total_steps });
    }
    let w = warmup_steps(total_steps, config.warmup_fraction);
    if w == 0 {
        return Ok(config.base_lr);
    }
    Ok(config.base_lr * (t as f64 / w as f64).min(1.0))
}

/// AdamW first/second moments, one entry per parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        OptimizerState {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }
}

const PAR_CHUNK: usize = 1 << 14;

/// One AdamW step with decoupled weight decay and bias correction:
///
/// ```text
/// θ ← θ(1 − lr·λ)
/// m ← β1·m + (1 − β1)·g,  v ← β2·v + (1 − β2)·g²
/// θ ← θ − lr · (m / (1 − β1^t)) / (sqrt(v / (1 − β2^t)) + ε)
/// ```
///
/// Elementwise, so the chunked parallel update is deterministic.
pub fn adamw_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    lr: f64,
    config: &TrainConfig,
) -> Result<(), TrainError> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(TrainError::Shape {
            params: params.len(),
            grads: grads.len(),
            state: state.m.len(),
        });
    }
    let step = state.step + 1;
    if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
        return Err(TrainError::NonFiniteGradient { step, index });
    }
    let (b1, b2) = (config.beta1, config.beta2);
    let bc1 = 1.0 - b1.powf(step as f64);
    let bc2 = 1.0 - b2.powf(step as f64);
    let decay = 1.0 - lr * config.weight_decay;
    let eps = config.eps;
    params
        .par_chunks_mut(PAR_CHUNK)
        .zip(state.m.par_chunks_mut(PAR_CHUNK))
        .zip(state.v.par_chunks_mut(PAR_CHUNK))
        .zip(grads.par_chunks(PAR_CHUNK))
        .for_each(|(((p, m), v), g)| {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] = p[i] * decay - lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    state.step = step;
    Ok(())
}

/// Loss and table gradients of one triplet.
#[derive(Debug, Clone)]
pub struct TripletPass {
    pub loss: f64,
    pub cos_sp: f64,
    pub cos_sn: f64,
    /// Gradients for source, positive and negative, in that order.
    pub grads: [RowGrads; 3],
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Gradient of `cos(a, b)` with respect to unit vector `a`: `b − cos·a`.
fn cos_grad(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(ai, bi)| bi - c * ai).collect()
}

pub fn triplet_forward_backward(
    triplet: &Triplet,
    params: &EncoderParams,
    tau: f64,
) -> Result<TripletPass, EncoderError> {
    let s: EncodeTrace = encode_traced(&triplet.source, params)?;
    let p = encode_traced(&triplet.positive, params)?;
    let n = encode_traced(&triplet.negative, params)?;
    let (es, ep, en) = (s.embedding.as_slice(), p.embedding.as_slice(), n.embedding.as_slice());
    let cos_sp = dot(es, ep).clamp(-1.0, 1.0);
    let cos_sn = dot(es, en).clamp(-1.0, 1.0);
    let loss = softplus((cos_sn - cos_sp) / tau);
    let g = sigmoid((cos_sn - cos_sp) / tau) / tau;
    let (d_sp, d_sn) = (-g, g);

    let gs: Vec<f64> = cos_grad(es, ep, cos_sp)
        .iter()
        .zip(cos_grad(es, en, cos_sn))
        .map(|(a, b)| d_sp * a + d_sn * b)
        .collect();
    let gp: Vec<f64> = cos_grad(ep, es, cos_sp).iter().map(|v| d_sp * v).collect();
    let gn: Vec<f64> = cos_grad(en, es, cos_sn).iter().map(|v| d_sn * v).collect();
    Ok(TripletPass {
        loss,
        cos_sp,
        cos_sn,
        grads: [
            backward_from_trace(&s, &gs)?,
            backward_from_trace(&p, &gp)?,
            backward_from_trace(&n, &gn)?,
        ],
    })
}

/// Mean loss over `triplets` and its dense gradient over the table.
/// Per-triplet passes may run in parallel; reduction follows input order.
pub fn batch_loss_and_grad(
    triplets: &[(usize, &Triplet)],
    params: &EncoderParams,
    tau: f64,
    grad: &mut [f64],
) -> Result<BatchSummary, TrainError> {
    let passes: Vec<Result<TripletPass, TrainError>> = triplets
        .par_iter()
        .map(|(index, t)| {
            triplet_forward_backward(t, params, tau).map_err(|source| TrainError::Encode { index: *index, source })
        })
        .collect();
    grad.iter_mut().for_each(|g| *g = 0.0);
    let scale = 1.0 / triplets.len() as f64;
    let dim = params.config.dim;
    let mut summary = BatchSummary::default();
    for pass in passes {
        let pass = pass?;
        for g in &pass.grads {
            g.add_into(grad, dim, scale);
        }
        summary.loss += pass.loss * scale;
        summary.mean_cos_sp += pass.cos_sp * scale;
        summary.mean_cos_sn += pass.cos_sn * scale;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchSummary {
    pub loss: f64,
    pub mean_cos_sp: f64,
    pub mean_cos_sn: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub mean_cos_sp: f64,
    pub mean_cos_sn: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainMetrics {
    pub steps: Vec<StepRecord>,
    /// Per epoch: (mean cos(s,p), mean cos(s,n)) over all triplets seen.
    pub epoch_means: Vec<(f64, f64)>,
}

impl TrainMetrics {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// `step,lr,loss,mean_cos_sp,mean_cos_sn`, with the optimiser constants
    /// recorded as a leading comment line.
    pub fn write_csv<W: Write>(&self, mut out: W, config: &TrainConfig) -> std::io::Result<()> {
        writeln!(
            out,
            "# tau={} base_lr={} warmup_fraction={} batch_size={} weight_decay={} beta1={} beta2={} eps={} seed={}",
            config.tau,
            config.base_lr,
            config.warmup_fraction,
            config.batch_size,
            config.weight_decay,
            config.beta1,
            config.beta2,
            config.eps,
            config.seed
        )?;
        writeln!(out, "step,lr,loss,mean_cos_sp,mean_cos_sn")?;
        for s in &self.steps {
            writeln!(out, "{},{:e},{},{},{}", s.step, s.lr, s.loss, s.mean_cos_sp, s.mean_cos_sn)?;
        }
        Ok(())
    }
}

/// Trains for `config.epochs` passes (one by default). Triplets are
/// shuffled once per epoch with the seeded stream and cut into batches of
/// `batch_size`; the last batch may be smaller.
pub fn train(
    triplets: &[Triplet],
    mut params: EncoderParams,
    config: &TrainConfig,
) -> Result<(EncoderParams, OptimizerState, TrainMetrics), TrainError> {
    config.validate()?;
    if triplets.is_empty() {
        return Err(TrainError::Empty);
    }
    params.check_shape().map_err(|source| TrainError::Encode { index: 0, source })?;
    let n = params.table.len();
    let mut state = OptimizerState::new(n);
    let mut grad = vec![0.0; n];
    let mut metrics = TrainMetrics::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let per_epoch = triplets.len().div_ceil(config.batch_size);
    let total = per_epoch * config.epochs;
    let mut step = 0;
    for _ in 0..config.epochs {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.shuffle(&mut rng);
        let (mut sum_sp, mut sum_sn) = (0.0, 0.0);
        for chunk in order.chunks(config.batch_size) {
            step += 1;
            let batch: Vec<(usize, &Triplet)> = chunk.iter().map(|&i| (i, &triplets[i])).collect();
            let summary = batch_loss_and_grad(&batch, &params, config.tau, &mut grad)?;
            if !summary.loss.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    step,
                    triplets: chunk.to_vec(),
                });
            }
            let lr = lr_at_step(step, total, config)?;
            adamw_step(&mut params.table, &grad, &mut state, lr, config)?;
            sum_sp += summary.mean_cos_sp * chunk.len() as f64;
            sum_sn += summary.mean_cos_sn * chunk.len() as f64;
            metrics.steps.push(StepRecord {
                step,
                lr,
                loss: summary.loss,
                mean_cos_sp: summary.mean_cos_sp,
                mean_cos_sn: summary.mean_cos_sn,
            });
        }
        let count = triplets.len() as f64;
        metrics.epoch_means.push((sum_sp / count, sum_sn / count));
    }
    Ok((params, state, metrics))
}

/// A single pass over the triplets, regardless of `config.epochs`.
pub fn train_one_epoch(
    triplets: &[Triplet],
    params: EncoderParams,
    config: &TrainConfig,
) -> Result<(EncoderParams, OptimizerState, TrainMetrics), TrainError> {
    let one = TrainConfig {
        epochs: 1,
        ..config.clone()
    };
    train(triplets, params, &one)
}
