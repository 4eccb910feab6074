//! Focal loss `FL(p_t) = -α_t (1 - p_t)^γ log(p_t)` and its exact logit gradient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to `p_t` inside the logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

pub const DEFAULT_GAMMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlphaMode {
    Uniform,
    #[default]
    InverseFrequency,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FocalConfig {
    /// Focusing parameter γ.
    pub gamma: f64,
    /// Per-class weights α. Filled from training counts unless `alpha_mode` is explicit.
    pub alpha: Vec<f64>,
    pub alpha_mode: AlphaMode,
}

impl Default for FocalConfig {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            alpha: Vec::new(),
            alpha_mode: AlphaMode::default(),
        }
    }
}

impl FocalConfig {
    /// Plain cross-entropy: γ = 0 with unit weights (filled in by [`resolved`](Self::resolved)).
    pub fn cross_entropy() -> Self {
        Self {
            gamma: 0.0,
            alpha: Vec::new(),
            alpha_mode: AlphaMode::Uniform,
        }
    }

    /// Returns a copy whose `alpha` is populated for the given class counts.
    pub fn resolved(&self, counts: &[usize]) -> Result<Self> {
        let alpha = match self.alpha_mode {
            AlphaMode::Explicit => {
                if self.alpha.len() != counts.len() {
                    return Err(Error::Config(format!(
                        "explicit alpha has {} entries for {} classes",
                        self.alpha.len(),
                        counts.len()
                    )));
                }
                self.alpha.clone()
            }
            mode => class_alpha_weights(counts, mode)?,
        };
        let cfg = Self {
            alpha,
            ..self.clone()
        };
        cfg.validate(counts.len())?;
        Ok(cfg)
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be finite and >= 0, got {}", self.gamma)));
        }
        if self.alpha.len() != classes {
            return Err(Error::Config(format!(
                "alpha has {} entries for {classes} classes",
                self.alpha.len()
            )));
        }
        if !self.alpha.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return Err(Error::Config("alpha entries must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Class weights for `mode`. Inverse frequency uses `N / (C·N_c)`, rescaled to mean 1.
pub fn class_alpha_weights(counts: &[usize], mode: AlphaMode) -> Result<Vec<f64>> {
    if let Some(idx) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(format!("#{idx}")));
    }
    match mode {
        AlphaMode::Uniform => Ok(vec![1.0; counts.len()]),
        AlphaMode::InverseFrequency => {
            let c = counts.len() as f64;
            let total: usize = counts.iter().sum();
            let raw: Vec<f64> = counts.iter().map(|&n| total as f64 / (c * n as f64)).collect();
            let mean = raw.iter().sum::<f64>() / c;
            Ok(raw.into_iter().map(|a| a / mean).collect())
        }
        AlphaMode::Explicit => Err(Error::Config(
            "explicit alpha weights come from the config, not from class counts".into(),
        )),
    }
}

/// Per-sample focal loss and its gradient with respect to the sample's logits.
fn focal_sample(logits: &[f64], label: usize, gamma: f64, alpha: f64) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();

    let pt = probs[label];
    // 1 - p_t summed from the other classes keeps precision when p_t ≈ 1.
    let q: f64 = probs
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, p)| p)
        .sum();
    let log_softmax = logits[label] - max - total.ln();
    let floored = log_softmax < LOG_FLOOR.ln();
    let log_pt = if floored { LOG_FLOOR.ln() } else { log_softmax };

    let focal_weight = if gamma == 0.0 { 1.0 } else { q.powf(gamma) };
    let loss = -alpha * focal_weight * log_pt;

    // dFL/dz_j = coeff · (δ_jy − p_j), coeff = α[γ q^(γ−1) p_t log p_t − q^γ · [p_t above floor]]
    let modulating_term = if gamma == 0.0 || q == 0.0 {
        0.0
    } else {
        gamma * q.powf(gamma - 1.0) * pt * log_pt
    };
    let ce_term = if floored { 0.0 } else { focal_weight };
    let coeff = alpha * (modulating_term - ce_term);
    let grad = probs
        .iter()
        .enumerate()
        .map(|(j, &p)| coeff * (if j == label { 1.0 } else { 0.0 } - p))
        .collect();
    (loss, grad)
}

/// Mean focal loss over a batch and the gradient of that mean with respect to every logit.
pub fn focal_loss_batch(
    logits: &[Vec<f64>],
    labels: &[usize],
    cfg: &FocalConfig,
) -> Result<(f64, Vec<Vec<f64>>)> {
    if logits.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if logits.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} logit rows for {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let classes = cfg.alpha.len();
    let scale = 1.0 / logits.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(logits.len());
    for (row, &label) in logits.iter().zip(labels) {
        if row.len() != classes {
            return Err(Error::Shape(format!(
                "logit row has {} entries, focal config has {classes} classes",
                row.len()
            )));
        }
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        if !row.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        let (loss, mut grad) = focal_sample(row, label, cfg.gamma, cfg.alpha[label]);
        total += loss;
        grad.iter_mut().for_each(|g| *g *= scale);
        grads.push(grad);
    }
    Ok((total * scale, grads))
}
