//! Adam, mini-batching and the epoch loop with validation-based model selection.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{label_indices, EvalReport};
use crate::mlp::{MlpParams, ParamGrads, DEFAULT_HIDDEN_WIDTH};
use crate::model::Model;
use crate::objective::FocalConfig;
use crate::rat::{rat_batch_loss, BernoulliSchedule, RatConfig};
use crate::rng::{substream_rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub hidden_width: usize,
    pub focal: FocalConfig,
    pub rat: RatConfig,
    pub enable_rat: bool,
    /// Drives initialization and batch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 16,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            hidden_width: DEFAULT_HIDDEN_WIDTH,
            focal: FocalConfig::default(),
            rat: RatConfig::default(),
            enable_rat: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.adam_eps > 0.0) {
            return Err(Error::Config("adam_eps must be > 0".into()));
        }
        if self.hidden_width == 0 {
            return Err(Error::Config("hidden_width must be >= 1".into()));
        }
        self.rat.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss_total: f64,
    pub adversarial_batch_fraction: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainHistory {
    /// One JSON object per epoch.
    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.epochs {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = fs::File::create(path)?;
        file.write_all(self.to_jsonl()?.as_bytes())?;
        Ok(())
    }

    /// Fraction of all batches in the run that carried the adversarial term.
    pub fn adversarial_fraction(&self) -> f64 {
        let n = self.epochs.len() as f64;
        self.epochs.iter().map(|e| e.adversarial_batch_fraction).sum::<f64>() / n
    }
}

/// A seeded permutation of `0..n` cut into `⌈n / batch_size⌉` batches.
pub fn make_batches(n: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut substream_rng(seed, Stream::Shuffle, epoch as u64));
    order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// First and second moment estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ParamGrads,
    pub v: ParamGrads,
    /// Number of steps taken so far.
    pub t: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(params: &MlpParams) -> Self {
        Self {
            m: ParamGrads::zeros_like(params),
            v: ParamGrads::zeros_like(params),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut MlpParams, grads: &ParamGrads, state: &mut AdamState, hyper: AdamHyper) -> Result<()> {
    if !grads.is_finite() {
        return Err(Error::Numeric(format!("non-finite gradient at step {}", state.t + 1)));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - hyper.beta1.powi(t);
    let bc2 = 1.0 - hyper.beta2.powi(t);
    let AdamHyper { lr, beta1, beta2, eps } = hyper;
    let params_arrays = params.arrays_mut();
    let m_arrays = state.m.arrays_mut();
    let v_arrays = state.v.arrays_mut();
    for (((p, g), m), v) in params_arrays.into_iter().zip(grads.arrays()).zip(m_arrays).zip(v_arrays) {
        if p.len() != g.len() {
            return Err(Error::Shape("gradient does not match parameters".into()));
        }
        for i in 0..p.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    if !params.arrays().iter().all(|a| a.iter().all(|v| v.is_finite())) {
        return Err(Error::Numeric(format!("parameters diverged at step {}", state.t)));
    }
    Ok(())
}

/// Embeddings and class indices ready for training.
struct Prepared {
    xs: Vec<Vec<f64>>,
    ys: Vec<usize>,
}

fn prepare(ds: &Dataset, labels: &[String], d: usize, name: &str) -> Result<Prepared> {
    if ds.is_empty() {
        return Err(Error::data(format!("{name} split is empty")));
    }
    let xs = ds.embeddings_f64()?;
    if let Some(bad) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::Dimension(format!(
            "{name} split has {}-dimensional embeddings, expected {d}",
            bad.len()
        )));
    }
    let ys = label_indices(ds, labels)?;
    Ok(Prepared { xs, ys })
}

fn predict_all(params: &MlpParams, xs: &[Vec<f64>]) -> Result<Vec<usize>> {
    xs.iter().map(|x| params.predict(x)).collect()
}

/// Train on `train`, select the epoch with the best validation macro-F1
/// (earliest on ties) and return that model with the full history.
pub fn train_run(train: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<(Model, TrainHistory)> {
    cfg.validate()?;
    let stats = class_counts(train);
    if stats.num_classes() < 2 {
        return Err(Error::data(format!(
            "training needs at least 2 classes, found {}",
            stats.num_classes()
        )));
    }
    let d = train
        .embedding_dim()
        .ok_or_else(|| Error::data("training split has no embeddings"))?;
    let labels = stats.labels.clone();
    let train_set = prepare(train, &labels, d, "train")?;
    let val_set = prepare(val, &labels, d, "validation")?;
    let focal = cfg.focal.resolved(&stats.counts)?;

    let mut params = MlpParams::init(cfg.seed, d, cfg.hidden_width, labels.len())?;
    let mut adam = AdamState::new(&params);
    let hyper = AdamHyper {
        lr: cfg.learning_rate,
        beta1: cfg.adam_beta1,
        beta2: cfg.adam_beta2,
        eps: cfg.adam_eps,
    };
    let mut schedule = BernoulliSchedule::from_config(&cfg.rat);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MlpParams)> = None;
    for epoch in 1..=cfg.epochs {
        let batches = make_batches(train_set.xs.len(), cfg.batch_size, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        let mut adversarial = 0usize;
        for batch in &batches {
            let k = cfg.enable_rat && schedule.next_k();
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_set.xs[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| train_set.ys[i]).collect();
            let (record, grads) = rat_batch_loss(&params, &xs, &ys, &focal, &cfg.rat, k)
                .map_err(|e| annotate(e, epoch))?;
            adam_step(&mut params, &grads, &mut adam, hyper).map_err(|e| annotate(e, epoch))?;
            loss_sum += record.loss_total;
            adversarial += usize::from(record.k);
        }
        let pred = predict_all(&params, &val_set.xs)?;
        let val_macro_f1 = EvalReport::from_predictions(&val_set.ys, &pred, &labels)?.macro_avg.f1;
        history.push(EpochRecord {
            epoch,
            mean_loss_total: loss_sum / batches.len() as f64,
            adversarial_batch_fraction: adversarial as f64 / batches.len() as f64,
            val_macro_f1,
        });
        if best.as_ref().is_none_or(|(f1, _, _)| val_macro_f1 > *f1) {
            best = Some((val_macro_f1, epoch, params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch");
    Ok((
        Model::new(best_params, labels)?,
        TrainHistory {
            epochs: history,
            best_epoch,
        },
    ))
}

fn annotate(err: Error, epoch: usize) -> Error {
    match err {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}: {msg}")),
        other => other,
    }
}
