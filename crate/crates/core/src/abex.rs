//! Abstract-then-expand augmentation through pluggable text generators.
//!
//! A raw report is first condensed to a short abstract by a prompted
//! generator, and the abstract is then expanded into `R` full-length
//! variants. Both steps go through [`TextGenProvider`]; the remote provider
//! speaks a small JSON protocol and [`MockTextGen`] is a deterministic
//! offline stand-in.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{AugmentationPlan, Dataset, Origin, Sample};
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::rng::{fnv1a64, stream_rng, Stream};

pub const DEFAULT_PROMPT: &str =
    "Summarize the following accident report in one sentence, keeping the accident type explicit: {text}";

const SLOT: &str = "{text}";

/// Number of leading tokens the mock abstractor keeps.
pub const MOCK_ABSTRACT_TOKENS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    template: String,
}

impl PromptTemplate {
    /// The template must contain the `{text}` slot exactly once.
    pub fn new(template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        let slots = template.matches(SLOT).count();
        if slots != 1 {
            return Err(Error::Config(format!(
                "prompt template must contain exactly one {SLOT} slot, found {slots}"
            )));
        }
        Ok(Self { template })
    }

    pub fn fill(&self, text: &str) -> String {
        self.template.replacen(SLOT, text, 1)
    }

    pub fn as_str(&self) -> &str {
        &self.template
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            template: DEFAULT_PROMPT.to_string(),
        }
    }
}

/// A text generator used for both the abstraction and the expansion step.
pub trait TextGenProvider: Send + Sync {
    /// Generate an abstract for `raw`, given the already-filled `prompt`.
    fn abstract_text(&self, prompt: &str, raw: &str) -> Result<String>;

    /// Generate one expansion of `abstract_text`. `variant` is the index within the request batch.
    fn expand(&self, abstract_text: &str, seed: u64, variant: usize) -> Result<String>;
}

/// Offline generator: abstraction keeps the first 12 whitespace tokens;
/// expansion is a seeded token shuffle followed by ` [variant i]`.
#[derive(Debug, Default)]
pub struct MockTextGen {
    calls: AtomicUsize,
}

impl MockTextGen {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl TextGenProvider for MockTextGen {
    fn abstract_text(&self, _prompt: &str, raw: &str) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(raw
            .split_whitespace()
            .take(MOCK_ABSTRACT_TOKENS)
            .collect::<Vec<_>>()
            .join(" "))
    }

    fn expand(&self, abstract_text: &str, seed: u64, variant: usize) -> Result<String> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let mut tokens: Vec<&str> = abstract_text.split_whitespace().collect();
        let mut rng = stream_rng(seed ^ fnv1a64(abstract_text.as_bytes()), Stream::MockText);
        tokens.shuffle(&mut rng);
        Ok(format!("{} [variant {variant}]", tokens.join(" ")))
    }
}

#[derive(Debug, Serialize)]
struct GenerateRequest<'a> {
    prompt: &'a str,
    max_tokens: u32,
    temperature: f64,
    seed: u64,
}

#[derive(Debug, Deserialize)]
struct GenerateResponse {
    text: String,
}

/// Remote generator speaking `POST <base>/v1/generate`.
#[derive(Debug, Clone)]
pub struct HttpTextGen {
    client: JsonClient,
    pub abstract_max_tokens: u32,
    pub expand_max_tokens: u32,
    pub abstract_temperature: f64,
    pub expand_temperature: f64,
}

impl HttpTextGen {
    pub fn new(base_url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(base_url, timeout),
            abstract_max_tokens: 64,
            expand_max_tokens: 256,
            abstract_temperature: 0.0,
            expand_temperature: 0.9,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client = self.client.with_retry(retry);
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.client = self.client.with_token(token);
        self
    }

    fn generate(&self, prompt: &str, max_tokens: u32, temperature: f64, seed: u64) -> Result<String> {
        let req = GenerateRequest {
            prompt,
            max_tokens,
            temperature,
            seed,
        };
        let resp: GenerateResponse = self.client.post("/v1/generate", &req)?;
        Ok(resp.text)
    }
}

impl TextGenProvider for HttpTextGen {
    fn abstract_text(&self, prompt: &str, _raw: &str) -> Result<String> {
        self.generate(prompt, self.abstract_max_tokens, self.abstract_temperature, 0)
    }

    fn expand(&self, abstract_text: &str, seed: u64, _variant: usize) -> Result<String> {
        self.generate(abstract_text, self.expand_max_tokens, self.expand_temperature, seed)
    }
}

/// Condense `raw` into its abstract. Empty generations are an error.
pub fn abstract_text(provider: &dyn TextGenProvider, prompt: &PromptTemplate, raw: &str) -> Result<String> {
    if raw.trim().is_empty() {
        return Err(Error::data("cannot abstract an empty text"));
    }
    let out = provider.abstract_text(&prompt.fill(raw), raw)?;
    let out = out.trim();
    if out.is_empty() {
        return Err(Error::Provider("abstraction returned empty text".into()));
    }
    Ok(out.to_string())
}

/// Attempts per variant when a generation comes back empty.
const EMPTY_GENERATION_ATTEMPTS: usize = 3;

/// `r` expansions of `abstract_text`, the i-th requested with seed `base_seed + i`.
pub fn expand_abstract(
    provider: &dyn TextGenProvider,
    abstract_text: &str,
    r: usize,
    base_seed: u64,
) -> Result<Vec<String>> {
    if r == 0 {
        return Err(Error::Config("expansion count must be >= 1".into()));
    }
    let mut out = Vec::with_capacity(r);
    for i in 0..r {
        let seed = base_seed.wrapping_add(i as u64);
        let mut text = None;
        for _ in 0..EMPTY_GENERATION_ATTEMPTS {
            let candidate = provider.expand(abstract_text, seed, i)?;
            let trimmed = candidate.trim();
            if !trimmed.is_empty() {
                text = Some(trimmed.to_string());
                break;
            }
        }
        match text {
            Some(t) => out.push(t),
            None => {
                return Err(Error::Provider(format!(
                    "only {} of {r} usable expansions after retries",
                    out.len()
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentOptions {
    pub base_seed: u64,
    /// Upper bound on concurrently processed samples.
    pub max_in_flight: usize,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            base_seed: 0,
            max_in_flight: 4,
        }
    }
}

/// Abstract and expansions for one parent sample.
type Generated = (String, Vec<String>);

fn generate_for(
    sample: &Sample,
    r: usize,
    abstractor: &dyn TextGenProvider,
    expander: &dyn TextGenProvider,
    prompt: &PromptTemplate,
    base_seed: u64,
) -> Result<Generated> {
    let raw = sample
        .text
        .as_deref()
        .ok_or_else(|| Error::data(format!("sample {:?} has no text", sample.id)))?;
    let abs = abstract_text(abstractor, prompt, raw)?;
    let sample_seed = base_seed ^ fnv1a64(sample.id.as_bytes());
    let variants = expand_abstract(expander, &abs, r, sample_seed)?;
    Ok((abs, variants))
}

/// Run the plan: every original sample with `R > 0` contributes `R` synthetic
/// samples `<id>-aug-<i>` carrying its label. Originals come first, then
/// synthetics grouped by parent in dataset order, independent of request
/// completion order.
pub fn augment_dataset(
    train: &Dataset,
    plan: &AugmentationPlan,
    abstractor: &dyn TextGenProvider,
    expander: &dyn TextGenProvider,
    prompt: &PromptTemplate,
    opts: AugmentOptions,
) -> Result<Dataset> {
    plan.check_against(train)?;
    let jobs: Vec<(usize, usize)> = train
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| (i, plan.count_for(&s.id)))
        .filter(|&(_, r)| r > 0)
        .collect();

    let results: Vec<Mutex<Option<Result<Generated>>>> = jobs.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = opts.max_in_flight.clamp(1, jobs.len().max(1));
    thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(idx, r)) = jobs.get(j) else { break };
                let out = generate_for(&train.samples[idx], r, abstractor, expander, prompt, opts.base_seed);
                let failed = out.is_err();
                *results[j].lock().expect("result slot") = Some(out);
                if failed {
                    // Stop handing out new work; the first failure in sample order is reported.
                    next.store(jobs.len(), Ordering::Relaxed);
                }
            });
        }
    });

    let results: Vec<Option<Result<Generated>>> = results
        .into_iter()
        .map(|slot| slot.into_inner().expect("result slot"))
        .collect();
    // Report the first failure in sample order.
    if let Some(pos) = results.iter().position(|r| matches!(r, Some(Err(_)))) {
        let id = &train.samples[jobs[pos].0].id;
        let err = results.into_iter().nth(pos).flatten().and_then(Result::err);
        return Err(with_sample(err.expect("failure present"), id));
    }

    let mut out = train.samples.clone();
    for (&(idx, _), res) in jobs.iter().zip(results) {
        let parent = &train.samples[idx];
        let (abs, variants) = res.expect("all jobs ran")?;
        for (i, text) in variants.into_iter().enumerate() {
            out.push(Sample {
                id: format!("{}-aug-{i}", parent.id),
                label: parent.label.clone(),
                text: Some(text),
                abstract_text: Some(abs.clone()),
                embedding: None,
                origin: Origin::Synthetic,
                parent_id: Some(parent.id.clone()),
                split: parent.split,
            });
        }
    }
    let ds = Dataset::new(out);
    ds.validate()?;
    Ok(ds)
}

fn with_sample(err: Error, id: &str) -> Error {
    match err {
        Error::Provider(msg) => Error::Provider(format!("sample {id:?}: {msg}")),
        Error::Data(msg) => Error::Data(format!("sample {id:?}: {msg}")),
        other => other,
    }
}
