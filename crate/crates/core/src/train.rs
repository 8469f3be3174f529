//! Adam, the step-decay schedule and the training loop.

use std::time::Instant;

use log::{debug, info};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::{NetBundle, SurrogateSet1D, SurrogateSet2D, BETA_MAX, BETA_MIN};
use crate::physics::{loss_total_1d, loss_total_2d, InitialCondition1D, InitialCondition2D, LossBreakdown, LossOptions};
use crate::sampler::{sample_batch, CollocationBatch, SamplerConfig};

/// `η_it = η₀ γ^⌊it/p⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub eta0: f64,
    pub gamma: f64,
    pub period: usize,
}

impl Default for Schedule {
    fn default() -> Self {
        Self { eta0: 1e-3, gamma: 0.96, period: 2500 }
    }
}

pub fn lr_at(s: &Schedule, it: usize) -> f64 {
    s.eta0 * s.gamma.powi((it / s.period.max(1)) as i32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v2: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v2: vec![0.0; len], step: 0, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update, then `β` re-clamping at `beta_indices`.
/// `iteration` only labels the error for a non-finite gradient.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta_indices: &[usize],
    iteration: usize,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidArgument(format!(
            "length mismatch: {} parameters, {} gradients, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite { iteration, term: format!("gradient of parameter {i}") });
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v2) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let mh = *m / c1;
        let vh = *v / c2;
        *p -= lr * mh / (vh.sqrt() + state.eps);
    }
    for &i in beta_indices {
        params[i] = params[i].clamp(BETA_MIN, BETA_MAX);
    }
    Ok(())
}

/// A surrogate set paired with its loss.
pub trait Model: NetBundle + Clone {
    type Ic;
    const DIMENSION: usize;

    fn loss(
        &self,
        batch: &CollocationBatch,
        eps: f64,
        ic: &Self::Ic,
        opts: &LossOptions,
        grad: Option<&mut Vec<f64>>,
    ) -> Result<LossBreakdown>;
}

impl Model for SurrogateSet1D {
    type Ic = InitialCondition1D;
    const DIMENSION: usize = 1;

    fn loss(
        &self,
        batch: &CollocationBatch,
        eps: f64,
        ic: &Self::Ic,
        opts: &LossOptions,
        grad: Option<&mut Vec<f64>>,
    ) -> Result<LossBreakdown> {
        loss_total_1d(self, batch, eps, ic, opts, grad)
    }
}

impl Model for SurrogateSet2D {
    type Ic = InitialCondition2D;
    const DIMENSION: usize = 2;

    fn loss(
        &self,
        batch: &CollocationBatch,
        eps: f64,
        ic: &Self::Ic,
        opts: &LossOptions,
        grad: Option<&mut Vec<f64>>,
    ) -> Result<LossBreakdown> {
        loss_total_2d(self, batch, eps, ic, opts, grad)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epsilon: f64,
    pub iterations: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub sampler: SamplerConfig,
    pub loss: LossOptions,
    pub log_every: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: LossBreakdown,
    pub rel_l2: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainingHistory {
    pub fn last(&self) -> Option<&HistoryRow> {
        self.rows.last()
    }

    pub fn min_total(&self) -> Option<f64> {
        self.rows.iter().map(|r| r.loss.total()).reduce(f64::min)
    }
}

/// Generator for network initialisation; independent of every batch stream.
pub fn init_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(u64::MAX);
    rng
}

fn check_finite(loss: &LossBreakdown, iteration: usize) -> Result<()> {
    for (name, v) in [("residual loss", loss.residual), ("initial loss", loss.initial), ("boundary loss", loss.boundary)] {
        if !v.is_finite() {
            return Err(Error::NonFinite { iteration, term: name.into() });
        }
    }
    Ok(())
}

/// Runs the sample, loss, gradient, Adam loop.
///
/// Rows are logged at every multiple of `log_every` (loss of that
/// iteration's batch, before its update) and once more after the last
/// update, labelled `iterations`. `evaluate` is called on each logged state
/// to fill `rel_l2`.
pub fn train<M: Model>(
    model: &mut M,
    ic: &M::Ic,
    settings: &TrainSettings,
    mut evaluate: Option<&mut dyn FnMut(&M) -> Result<f64>>,
) -> Result<TrainingHistory> {
    let mut history = TrainingHistory::default();
    if settings.iterations == 0 {
        return Ok(history);
    }
    let sampler = SamplerConfig { dimension: M::DIMENSION, ..settings.sampler };
    let betas = model.beta_indices();
    let mut params = model.flat_params();
    let mut state = AdamState::new(params.len());
    let mut grad = Vec::with_capacity(params.len());
    let stride = settings.log_every.max(1);
    let start = Instant::now();

    for it in 0..settings.iterations {
        let batch = sample_batch(&sampler, settings.seed, it as u64)?;
        let loss = model.loss(&batch, settings.epsilon, ic, &settings.loss, Some(&mut grad))?;
        check_finite(&loss, it)?;
        if it % stride == 0 {
            let rel_l2 = evaluate.as_mut().map(|f| f(model)).transpose()?;
            info!("iter {it}: loss {:.4e}{}", loss.total(), rel_l2.map(|e| format!(", rel_l2 {e:.3e}")).unwrap_or_default());
            history.rows.push(HistoryRow { iter: it, loss, rel_l2, seconds: start.elapsed().as_secs_f64() });
        } else {
            debug!("iter {it}: loss {:.4e}", loss.total());
        }
        adam_step(&mut params, &grad, &mut state, lr_at(&settings.schedule, it), &betas, it)?;
        model.set_flat_params(&params)?;
    }

    let it = settings.iterations;
    let batch = sample_batch(&sampler, settings.seed, it as u64)?;
    let loss = model.loss(&batch, settings.epsilon, ic, &settings.loss, None)?;
    check_finite(&loss, it)?;
    let rel_l2 = evaluate.as_mut().map(|f| f(model)).transpose()?;
    info!("final: loss {:.4e}{}", loss.total(), rel_l2.map(|e| format!(", rel_l2 {e:.3e}")).unwrap_or_default());
    history.rows.push(HistoryRow { iter: it, loss, rel_l2, seconds: start.elapsed().as_secs_f64() });
    Ok(history)
}
