//! Reference implementations used as test oracles. Written as plain loops,
//! deliberately sharing no code with the library.
#![allow(dead_code)]

use abexrat::dataset::Sample;
use abexrat::mlp::MlpParams;
use abexrat::objective::FocalConfig;
use abexrat::rat::rat_batch_loss;
use abexrat::{AlphaMode, Dataset, RatConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Forward pass: W1 is h×d row-major, W2 is C×h row-major.
pub fn oracle_logits(p: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut hidden = vec![0.0; p.h];
    for j in 0..p.h {
        let mut z = p.b1[j];
        for i in 0..p.d {
            z += p.w1[j * p.d + i] * x[i];
        }
        hidden[j] = z.max(0.0);
    }
    let mut out = vec![0.0; p.c];
    for k in 0..p.c {
        let mut z = p.b2[k];
        for j in 0..p.h {
            z += p.w2[k * p.h + j] * hidden[j];
        }
        out[k] = z;
    }
    out
}

/// Mean of `-α_y (1 - p_y)^γ ln p_y` over the batch, with p from a log-sum-exp softmax.
pub fn oracle_focal(logits: &[Vec<f64>], ys: &[usize], gamma: f64, alpha: &[f64]) -> f64 {
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(ys) {
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let log_p = (z[y] - lse).max(1e-12f64.ln());
        let p = log_p.exp();
        total += -alpha[y] * (1.0 - p).powf(gamma) * log_p;
    }
    total / logits.len() as f64
}

pub fn oracle_mean_ce(logits: &[Vec<f64>], ys: &[usize]) -> f64 {
    let mut total = 0.0;
    for (z, &y) in logits.iter().zip(ys) {
        let sum: f64 = z.iter().map(|v| v.exp()).sum();
        total += sum.ln() - z[y];
    }
    total / logits.len() as f64
}

pub fn oracle_batch_loss(p: &MlpParams, xs: &[Vec<f64>], ys: &[usize], gamma: f64, alpha: &[f64]) -> f64 {
    let logits: Vec<Vec<f64>> = xs.iter().map(|x| oracle_logits(p, x)).collect();
    oracle_focal(&logits, ys, gamma, alpha)
}

/// ‖a − n‖ / max(‖a‖, ‖n‖); zero when both vectors are numerically zero.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub struct GradInstance {
    pub params: MlpParams,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<usize>,
    pub gamma: f64,
    pub alpha: Vec<f64>,
}

impl GradInstance {
    pub fn random(seed: u64) -> Self {
        let mut r = rng(seed);
        let d = r.random_range(1..=16);
        let h = r.random_range(1..=16);
        let c = r.random_range(2..=7);
        let b = r.random_range(1..=8);
        let mut params = MlpParams::init(seed, d, h, c).unwrap();
        // Nonzero biases so every parameter block is exercised.
        params.b1.iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
        params.b2.iter_mut().for_each(|v| *v = r.random_range(-0.5..0.5));
        let xs = (0..b).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let ys = (0..b).map(|_| r.random_range(0..c)).collect();
        let gamma = r.random_range(0.0..4.0);
        let alpha = (0..c).map(|_| r.random_range(0.2..2.0)).collect();
        Self {
            params,
            xs,
            ys,
            gamma,
            alpha,
        }
    }

    pub fn focal(&self) -> FocalConfig {
        FocalConfig {
            gamma: self.gamma,
            alpha: self.alpha.clone(),
            alpha_mode: AlphaMode::Explicit,
        }
    }

    fn loss_with(&self, params: &MlpParams, xs: &[Vec<f64>]) -> f64 {
        oracle_batch_loss(params, xs, &self.ys, self.gamma, &self.alpha)
    }

    /// Worst relative error over the four parameter blocks and the input gradients.
    pub fn max_relative_error(&self, step: f64) -> f64 {
        let refs: Vec<&[f64]> = self.xs.iter().map(Vec::as_slice).collect();
        let rat = RatConfig::default();
        let (_, grads) = rat_batch_loss(&self.params, &refs, &self.ys, &self.focal(), &rat, false).unwrap();

        let mut worst: f64 = 0.0;
        let blocks: [(&[f64], fn(&mut MlpParams) -> &mut Vec<f64>); 4] = [
            (&grads.w1, |p| &mut p.w1),
            (&grads.b1, |p| &mut p.b1),
            (&grads.w2, |p| &mut p.w2),
            (&grads.b2, |p| &mut p.b2),
        ];
        for (analytic, field) in blocks {
            let mut numeric = vec![0.0; analytic.len()];
            for (i, n) in numeric.iter_mut().enumerate() {
                let mut plus = self.params.clone();
                field(&mut plus)[i] += step;
                let mut minus = self.params.clone();
                field(&mut minus)[i] -= step;
                *n = (self.loss_with(&plus, &self.xs) - self.loss_with(&minus, &self.xs)) / (2.0 * step);
            }
            worst = worst.max(relative_error(analytic, &numeric));
        }

        // Input gradients of the batch-mean loss.
        let logits: Vec<Vec<f64>> = self.xs.iter().map(|x| self.params.logits(x).unwrap()).collect();
        let (_, dlogits) = abexrat::objective::focal_loss_batch(&logits, &self.ys, &self.focal()).unwrap();
        for (s, x) in self.xs.iter().enumerate() {
            let cache = self.params.forward(x).unwrap();
            let (_, analytic) = self.params.backward(&cache, &dlogits[s]).unwrap();
            let numeric: Vec<f64> = (0..x.len())
                .map(|i| {
                    let mut plus = self.xs.clone();
                    plus[s][i] += step;
                    let mut minus = self.xs.clone();
                    minus[s][i] -= step;
                    (self.loss_with(&self.params, &plus) - self.loss_with(&self.params, &minus)) / (2.0 * step)
                })
                .collect();
            worst = worst.max(relative_error(&analytic, &numeric));
        }
        worst
    }
}

/// Per-class (precision, recall, f1, support) by direct counting over the samples.
pub fn oracle_prf(truth: &[usize], pred: &[usize], classes: usize) -> Vec<(f64, f64, f64, u64)> {
    (0..classes)
        .map(|k| {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            for (&t, &p) in truth.iter().zip(pred) {
                match (t == k, p == k) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
            let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
            let f1 = if tp == 0 { 0.0 } else { 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64 };
            (precision, recall, f1, tp + fn_)
        })
        .collect()
}

pub fn oracle_confusion(truth: &[usize], pred: &[usize], classes: usize) -> Vec<Vec<u64>> {
    (0..classes)
        .map(|i| {
            (0..classes)
                .map(|j| truth.iter().zip(pred).filter(|&(&t, &p)| t == i && p == j).count() as u64)
                .collect()
        })
        .collect()
}

/// Dataset of `counts[c]` samples per class `c{c}` with text and no embeddings.
pub fn text_dataset(counts: &[usize]) -> Dataset {
    let mut samples = Vec::new();
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            samples.push(
                Sample::new(format!("c{c}-{i:04}"), format!("c{c}"))
                    .with_text(format!("worker {i} of crew {c} fell from the scaffold near bay {} during shift", i % 7)),
            );
        }
    }
    Dataset::new(samples)
}
