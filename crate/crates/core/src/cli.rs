//! `abexrat` command line: synth, split, plan, augment, embed, train, eval.
//!
//! Exit codes: 0 success, 1 usage, 2 data/format, 3 provider, 4 numeric.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::abex::{augment_dataset, AugmentOptions, HttpTextGen, MockTextGen, PromptTemplate};
use crate::dataset::{augmentation_plan, load_dataset, save_dataset, stratified_split, AugmentationPlan, Split};
use crate::embedder::{embed_dataset, EmbeddingCache, EmbeddingProvider, HttpEmbedder, MockEmbedder};
use crate::error::{Error, Result};
use crate::metrics::evaluate;
use crate::model::Model;
use crate::synthbench::{generate_synthetic, jitter_augment, SynthSpec};
use crate::trainer::{train_run, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;

#[derive(Debug, Parser)]
#[command(name = "abexrat", version, about = "Augment, embed, adversarially train and evaluate imbalanced text classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate an imbalanced synthetic embedding dataset.
    Synth(SynthArgs),
    /// Stratified train/val/test split.
    Split(SplitArgs),
    /// Compute the per-class and per-sample augmentation budget for a training file.
    Plan(PlanArgs),
    /// Execute an augmentation plan on a training file.
    Augment(AugmentArgs),
    /// Attach embeddings to every sample.
    Embed(EmbedArgs),
    /// Train the classifier.
    Train(TrainArgs),
    /// Evaluate a model on a dataset.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Comma-separated per-class sample counts.
    #[arg(long, value_delimiter = ',', default_values_t = SynthSpec::default_profile(0).class_counts)]
    counts: Vec<usize>,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 1.0)]
    sep: f64,
    #[arg(long, default_value_t = 0.8)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: PathBuf,
    /// Train:val:test ratios.
    #[arg(long, default_value = "8:1:1")]
    ratios: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Args)]
struct PlanArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    multiplier: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["provider_url", "mock", "jitter"])))]
struct AugmentArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Base URL of a text-generation endpoint.
    #[arg(long)]
    provider_url: Option<String>,
    /// Use the offline deterministic generator.
    #[arg(long)]
    mock: bool,
    /// Augment in embedding space with gaussian jitter of this scale instead of generating text.
    #[arg(long)]
    jitter: Option<f64>,
    /// File holding the abstraction prompt; must contain `{text}` once.
    #[arg(long)]
    prompt_file: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["provider_url", "mock"])))]
struct EmbedArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    provider_url: Option<String>,
    #[arg(long)]
    mock: bool,
    #[arg(long)]
    dim: usize,
    #[arg(long)]
    cache: PathBuf,
    #[arg(long)]
    no_normalize: bool,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 60)]
    timeout_secs: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    val: PathBuf,
    /// JSON training config; omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    history: PathBuf,
    #[arg(long)]
    no_rat: bool,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    p_rat: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Optional CSV export of the row-normalized confusion matrix.
    #[arg(long)]
    confusion: Option<PathBuf>,
}

/// Parse `argv` (including the program name), run the subcommand and return the exit code.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Plan(a) => plan(a),
        Command::Augment(a) => augment(a),
        Command::Embed(a) => embed(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        class_counts: a.counts,
        dim: a.dim,
        separation: a.sep,
        noise: a.noise,
        seed: a.seed,
    };
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, &a.out)?;
    eprintln!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(())
}

fn parse_ratios(text: &str) -> Result<[u32; 3]> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::Config(format!("ratios must look like 8:1:1, got {text:?}"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let mut out = [0u32; 3];
    for (slot, p) in out.iter_mut().zip(parts) {
        *slot = p.trim().parse().map_err(|_| bad())?;
    }
    Ok(out)
}

fn split(a: SplitArgs) -> Result<()> {
    let ratios = parse_ratios(&a.ratios)?;
    let ds = load_dataset(&a.data)?;
    let (train, val, test) = stratified_split(&ds, ratios, a.seed)?;
    fs::create_dir_all(&a.out_dir)?;
    for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
        save_dataset(part, a.out_dir.join(format!("{name}.jsonl")))?;
    }
    eprintln!("split {} samples into {}/{}/{}", ds.len(), train.len(), val.len(), test.len());
    Ok(())
}

fn plan(a: PlanArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let plan = augmentation_plan(&ds, a.multiplier)?;
    plan.save(&a.out)?;
    eprintln!("planned {} synthetic samples (target {} per class)", plan.total_synthetic(), plan.target);
    Ok(())
}

/// Only training data may be augmented.
fn ensure_train_split(ds: &crate::dataset::Dataset, path: &Path) -> Result<()> {
    if let Some(s) = ds
        .samples
        .iter()
        .find(|s| matches!(s.split, Some(Split::Val) | Some(Split::Test)))
    {
        return Err(Error::data(format!(
            "{} contains {:?} which belongs to the {} split; only training data may be augmented",
            path.display(),
            s.id,
            if s.split == Some(Split::Val) { "val" } else { "test" }
        )));
    }
    Ok(())
}

fn augment(a: AugmentArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    ensure_train_split(&ds, &a.data)?;
    let plan = AugmentationPlan::load(&a.plan)?;
    let out = if let Some(sigma) = a.jitter {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("jitter scale must be > 0, got {sigma}")));
        }
        jitter_augment(&ds, &plan, sigma, a.seed)?
    } else {
        let prompt = match &a.prompt_file {
            Some(p) => PromptTemplate::new(fs::read_to_string(p)?.trim_end())?,
            None => PromptTemplate::default(),
        };
        let opts = AugmentOptions {
            base_seed: a.seed,
            max_in_flight: a.max_in_flight,
        };
        match &a.provider_url {
            Some(url) => {
                let provider = HttpTextGen::new(url.as_str(), Duration::from_secs(a.timeout_secs));
                augment_dataset(&ds, &plan, &provider, &provider, &prompt, opts)?
            }
            None => {
                let mock = MockTextGen::new();
                augment_dataset(&ds, &plan, &mock, &mock, &prompt, opts)?
            }
        }
    };
    save_dataset(&out, &a.out)?;
    eprintln!("augmented {} → {} samples", ds.len(), out.len());
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let provider: Box<dyn EmbeddingProvider> = match &a.provider_url {
        Some(url) => Box::new(
            HttpEmbedder::new(url.as_str(), a.dim, Duration::from_secs(a.timeout_secs)).with_batch_limit(a.batch),
        ),
        None => Box::new(MockEmbedder::new(a.dim).with_batch_limit(a.batch)),
    };
    let mut cache = EmbeddingCache::open(&a.cache, a.dim)?;
    let before = cache.len();
    let result = embed_dataset(&ds, provider.as_ref(), &mut cache, !a.no_normalize);
    // Keep whatever was fetched even if a later batch failed.
    if cache.len() != before {
        cache.save(&a.cache)?;
    }
    let out = result?;
    save_dataset(&out, &a.out)?;
    eprintln!("embedded {} samples ({} new cache entries)", out.len(), cache.len() - before);
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if a.no_rat {
        cfg.enable_rat = false;
    }
    if let Some(g) = a.gamma {
        cfg.focal.gamma = g;
    }
    if let Some(p) = a.p_rat {
        cfg.rat.p_rat = p;
    }
    if let Some(e) = a.epsilon {
        cfg.rat.epsilon = e;
    }
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    let train = load_dataset(&a.train)?;
    let val = load_dataset(&a.val)?;
    let (model, history) = train_run(&train, &val, &cfg)?;
    model.save(&a.out)?;
    history.save(&a.history)?;
    let best = &history.epochs[history.best_epoch - 1];
    eprintln!(
        "best epoch {} of {}: val macro-F1 {:.4}",
        history.best_epoch,
        history.epochs.len(),
        best.val_macro_f1
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = Model::load(&a.model)?;
    let ds = load_dataset(&a.data)?;
    let report = evaluate(&model, &ds)?;
    report.save(&a.report)?;
    if let Some(path) = &a.confusion {
        fs::write(path, report.confusion_csv()?)?;
    }
    eprintln!(
        "macro-F1 {:.4}  weighted-F1 {:.4}  (n={})",
        report.macro_avg.f1, report.weighted.f1, report.n
    );
    Ok(())
}
