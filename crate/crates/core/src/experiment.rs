//! End-to-end runs on synthetic data: generate → split → (augment) → train → evaluate.
//!
//! Used by the ablation and determinism checks; each [`Arm`] switches
//! augmentation, adversarial training and the focal objective independently.

use crate::dataset::{augmentation_plan, stratified_split};
use crate::error::Result;
use crate::metrics::{evaluate, EvalReport};
use crate::model::Model;
use crate::objective::FocalConfig;
use crate::synthbench::{generate_synthetic, jitter_augment, SynthSpec, DEFAULT_JITTER_SIGMA};
use crate::trainer::{train_run, TrainConfig, TrainHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub augment: bool,
    pub rat: bool,
    pub focal: bool,
}

impl Arm {
    pub const FULL: Arm = Arm {
        augment: true,
        rat: true,
        focal: true,
    };
    pub const WITHOUT_RAT: Arm = Arm {
        augment: true,
        rat: false,
        focal: true,
    };
    pub const WITHOUT_AUGMENT: Arm = Arm {
        augment: false,
        rat: true,
        focal: true,
    };
    pub const BASELINE: Arm = Arm {
        augment: false,
        rat: false,
        focal: false,
    };

    pub fn name(&self) -> String {
        match *self {
            Arm::FULL => "full".into(),
            Arm::WITHOUT_RAT => "w/o RAT".into(),
            Arm::WITHOUT_AUGMENT => "w/o augmentation".into(),
            Arm::BASELINE => "baseline".into(),
            Arm { augment, rat, focal } => format!("augment={augment} rat={rat} focal={focal}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Model as it would be written to disk (weights rounded to f32).
    pub model: Model,
    pub history: TrainHistory,
    /// Test-split evaluation of `model`.
    pub report: EvalReport,
}

/// One arm on `spec` (its seed drives the data) with training seed `seed`.
pub fn run_arm(spec: &SynthSpec, arm: Arm, base: &TrainConfig, seed: u64) -> Result<RunOutput> {
    let data = generate_synthetic(spec)?;
    let (train, val, test) = stratified_split(&data, [8, 1, 1], seed)?;
    let train = if arm.augment {
        let plan = augmentation_plan(&train, 1.0)?;
        jitter_augment(&train, &plan, DEFAULT_JITTER_SIGMA, seed)?
    } else {
        train
    };
    let mut cfg = base.clone();
    cfg.seed = seed;
    cfg.rat.schedule_seed = seed;
    cfg.enable_rat = arm.rat;
    if !arm.focal {
        cfg.focal = FocalConfig::cross_entropy();
    }
    let (model, history) = train_run(&train, &val, &cfg)?;
    let model = model.quantized();
    let report = evaluate(&model, &test)?;
    Ok(RunOutput { model, history, report })
}

/// Middle value (mean of the two middle values for even lengths); NaN when empty.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    }
}

#[derive(Debug, Clone)]
pub struct ArmSummary {
    pub arm: Arm,
    /// Test macro-F1 per seed, in seed order.
    pub scores: Vec<f64>,
    pub median: f64,
}

/// Every arm over `seeds`; `spec(seed)` supplies the data for each seed.
pub fn run_ablation(
    arms: &[Arm],
    seeds: impl IntoIterator<Item = u64> + Clone,
    spec: impl Fn(u64) -> SynthSpec,
    base: &TrainConfig,
) -> Result<Vec<ArmSummary>> {
    arms.iter()
        .map(|&arm| {
            let scores = seeds
                .clone()
                .into_iter()
                .map(|seed| Ok(run_arm(&spec(seed), arm, base, seed)?.report.macro_avg.f1))
                .collect::<Result<Vec<_>>>()?;
            let median = median(&scores);
            Ok(ArmSummary { arm, scores, median })
        })
        .collect()
}
