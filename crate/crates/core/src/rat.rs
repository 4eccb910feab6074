//! Randomized adversarial training.
//!
//! Each batch draws `k ~ Bernoulli(p_rat)` from a dedicated schedule stream.
//! When `k = 1` every sample is pushed along its L2-normalized input gradient
//! (fast gradient method) and the loss on the perturbed inputs is added to the
//! clean loss; the parameters then take one step on the summed gradients.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{MlpParams, ParamGrads};
use crate::objective::{focal_loss_batch, FocalConfig};
use crate::rng::{stream_rng, Stream};

/// Gradients with norm at or below this produce no perturbation.
pub const ZERO_GRAD_NORM: f64 = 1e-12;

pub const DEFAULT_P_RAT: f64 = 0.5;
pub const DEFAULT_EPSILON: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatConfig {
    /// Probability that a batch receives the adversarial term.
    pub p_rat: f64,
    /// L2 magnitude of the perturbation.
    pub epsilon: f64,
    pub schedule_seed: u64,
}

impl Default for RatConfig {
    fn default() -> Self {
        Self {
            p_rat: DEFAULT_P_RAT,
            epsilon: DEFAULT_EPSILON,
            schedule_seed: 0,
        }
    }
}

impl RatConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_rat) {
            return Err(Error::Config(format!("p_rat must lie in [0, 1], got {}", self.p_rat)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Loss bookkeeping for one batch; `loss_total = loss_std + k·loss_adv`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchLossRecord {
    pub loss_std: f64,
    pub loss_adv: Option<f64>,
    pub k: bool,
    pub loss_total: f64,
}

/// Bernoulli gate drawn once per batch.
#[derive(Debug, Clone)]
pub struct BernoulliSchedule {
    rng: ChaCha8Rng,
    p: f64,
}

impl BernoulliSchedule {
    pub fn new(p: f64, seed: u64) -> Self {
        Self {
            rng: stream_rng(seed, Stream::Schedule),
            p,
        }
    }

    pub fn from_config(cfg: &RatConfig) -> Self {
        Self::new(cfg.p_rat, cfg.schedule_seed)
    }

    /// Next draw of `k`. Always false for p = 0 and always true for p = 1.
    pub fn next_k(&mut self) -> bool {
        self.rng.random::<f64>() < self.p
    }
}

/// `ε · g / ‖g‖₂`, or the zero vector when `‖g‖₂ ≤ 1e-12`.
pub fn fgm_perturb(input_grad: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    if !input_grad.iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("non-finite input gradient".into()));
    }
    let norm = input_grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm <= ZERO_GRAD_NORM {
        return Ok(vec![0.0; input_grad.len()]);
    }
    let scale = epsilon / norm;
    Ok(input_grad.iter().map(|g| g * scale).collect())
}

/// Focal loss of `params` on a batch plus the accumulated parameter gradients.
/// Also returns the per-sample input gradients.
fn batch_pass(
    params: &MlpParams,
    xs: &[&[f64]],
    ys: &[usize],
    focal: &FocalConfig,
    grads: &mut ParamGrads,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let caches = xs
        .iter()
        .map(|x| params.forward(x))
        .collect::<Result<Vec<_>>>()?;
    let logits: Vec<Vec<f64>> = caches.iter().map(|c| c.logits.clone()).collect();
    let (loss, dlogits) = focal_loss_batch(&logits, ys, focal)?;
    let input_grads = caches
        .iter()
        .zip(&dlogits)
        .map(|(cache, dl)| params.backward_into(cache, dl, grads))
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, input_grads))
}

/// Combined clean + (gated) adversarial loss for one batch.
///
/// The perturbation is built from the clean-loss input gradient and then held
/// constant: no gradient flows through its construction. Accumulation runs in
/// sample-index order.
pub fn rat_batch_loss(
    params: &MlpParams,
    xs: &[&[f64]],
    ys: &[usize],
    focal: &FocalConfig,
    rat: &RatConfig,
    k: bool,
) -> Result<(BatchLossRecord, ParamGrads)> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!("{} inputs for {} labels", xs.len(), ys.len())));
    }
    let mut grads = ParamGrads::zeros_like(params);
    let (loss_std, input_grads) = batch_pass(params, xs, ys, focal, &mut grads)?;

    let loss_adv = if k {
        let adversarial = xs
            .iter()
            .zip(&input_grads)
            .map(|(x, g)| {
                let r = fgm_perturb(g, rat.epsilon)?;
                Ok(x.iter().zip(r).map(|(a, b)| a + b).collect::<Vec<f64>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let adv_refs: Vec<&[f64]> = adversarial.iter().map(Vec::as_slice).collect();
        let (loss, _) = batch_pass(params, &adv_refs, ys, focal, &mut grads)?;
        Some(loss)
    } else {
        None
    };

    let record = BatchLossRecord {
        loss_std,
        loss_adv,
        k,
        loss_total: loss_std + loss_adv.unwrap_or(0.0),
    };
    Ok((record, grads))
}
