//! Imbalanced text classification pipeline: class-inverse abstract/expand
//! augmentation, embedding extraction through pluggable providers, and a
//! small MLP trained with focal loss plus randomly gated fast-gradient
//! adversarial perturbations, evaluated with macro and weighted scores.

pub mod abex;
pub mod cli;
pub mod dataset;
pub mod embedder;
pub mod error;
pub mod experiment;
pub mod http;
pub mod metrics;
pub mod mlp;
pub mod model;
pub mod objective;
pub mod rat;
pub mod rng;
pub mod synthbench;
pub mod trainer;

pub use dataset::{AugmentationPlan, ClassStats, Dataset, Origin, Sample, Split};
pub use error::{Error, Result};
pub use metrics::EvalReport;
pub use mlp::{ForwardCache, MlpParams, ParamGrads};
pub use model::Model;
pub use objective::{AlphaMode, FocalConfig};
pub use rat::{BatchLossRecord, RatConfig};
pub use trainer::{TrainConfig, TrainHistory};
