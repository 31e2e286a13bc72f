//! Numeric primitives shared by every trainer: Adam, the learning-rate schedule,
//! finite-difference gradient checks and seeded RNG construction.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// The RNG threaded through every stochastic routine.
pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-tensor Adam moments.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_hyperparams(len, ADAM_BETA1, ADAM_BETA2, ADAM_EPS)
    }

    pub fn with_hyperparams(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            step: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            beta1,
            beta2,
            eps,
        }
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One bias-corrected Adam update, in place. Increments `state.step`.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::invalid(format!(
            "adam_step length mismatch: params {}, grads {}, moments {}",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let t = state.step as i32;
    let correction1 = 1.0 - b1.powi(t);
    let correction2 = 1.0 - b2.powi(t);
    for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(
        state
            .first_moment
            .iter_mut()
            .zip(state.second_moment.iter_mut()),
    ) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / correction1;
        let v_hat = *v / correction2;
        *p -= lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

/// Training hyperparameters for the contrastive trainer.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub warmup_fraction: f64,
    pub margin: f64,
    pub seed: u64,
    /// Keep the rate at `base_lr` after warm-up instead of decaying it.
    pub lr_hold: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 2e-5,
            batch_size: 16,
            epochs: 1,
            warmup_fraction: 0.10,
            margin: 1.0,
            seed: 0,
            lr_hold: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::invalid(format!("base_lr must be > 0, got {}", self.base_lr)));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::invalid(format!(
                "warmup_fraction must lie in [0, 1], got {}",
                self.warmup_fraction
            )));
        }
        if !(self.margin >= 0.0) || !self.margin.is_finite() {
            return Err(Error::invalid(format!("margin must be >= 0, got {}", self.margin)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        Ok(())
    }

    /// Number of warm-up steps, `ceil(warmup_fraction * total)`.
    pub fn warmup_steps(&self, total_steps: usize) -> usize {
        ((self.warmup_fraction * total_steps as f64).ceil() as usize).min(total_steps)
    }
}

/// Linear warm-up from 0 to `base_lr`, then linear decay to 0 at `total_steps`
/// (or a constant `base_lr` when `lr_hold` is set).
pub fn lr_at(step: usize, total_steps: usize, cfg: &TrainConfig) -> Result<f64> {
    if total_steps == 0 {
        return Err(Error::invalid("total_steps must be >= 1"));
    }
    if step >= total_steps {
        return Err(Error::invalid(format!("step {step} outside schedule of {total_steps} steps")));
    }
    let warmup = cfg.warmup_steps(total_steps);
    if step < warmup {
        return Ok(cfg.base_lr * step as f64 / warmup as f64);
    }
    if cfg.lr_hold {
        return Ok(cfg.base_lr);
    }
    let decay = (total_steps - warmup) as f64;
    Ok(cfg.base_lr * (total_steps - step) as f64 / decay)
}

/// Compares `analytic` against central differences of `loss_fn` around `params`
/// and returns the largest per-coordinate relative error
/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_check<F>(mut loss_fn: F, params: &[f64], analytic: &[f64], h: f64) -> Result<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::invalid(format!(
            "params has {} coordinates but analytic gradient has {}",
            params.len(),
            analytic.len()
        )));
    }
    if !(h > 0.0) {
        return Err(Error::invalid(format!("step size must be > 0, got {h}")));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0_f64;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = loss_fn(&probe);
        probe[i] = orig - h;
        let minus = loss_fn(&probe);
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!(
                "loss is not finite when perturbing coordinate {i}"
            )));
        }
        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
