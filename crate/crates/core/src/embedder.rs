//! Text → vector feature extraction behind [`EmbeddingProvider`], with a
//! content-addressed on-disk cache and a deterministic mock.
//!
//! Cache file layout (little-endian):
//!
//! ```text
//! "ABXE"  u16 version=1  u16 reserved=0  u32 d  u64 n
//! n × ( u64 fnv1a64(text)  d × f32 )
//! ```

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::http::{JsonClient, RetryPolicy};
use crate::rng::{fnv1a64, stream_rng, Stream};
use crate::synthbench::l2_normalize;

pub const CACHE_MAGIC: &[u8; 4] = b"ABXE";
pub const CACHE_VERSION: u16 = 1;
pub const DEFAULT_BATCH: usize = 32;

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// Maximum texts per request.
    fn batch_limit(&self) -> usize {
        DEFAULT_BATCH
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>>;
}

/// Deterministic pseudo-embedding: FNV-1a of the UTF-8 bytes seeds a ChaCha
/// stream, `d` standard normals are drawn and the vector is L2-normalized.
pub fn mock_embed(text: &str, d: usize) -> Vec<f64> {
    let mut rng = stream_rng(fnv1a64(text.as_bytes()), Stream::MockEmbed);
    let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
    l2_normalize(&mut v);
    v
}

/// Provider backed by [`mock_embed`] that counts requests.
#[derive(Debug)]
pub struct MockEmbedder {
    d: usize,
    batch: usize,
    calls: AtomicUsize,
}

impl MockEmbedder {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            batch: DEFAULT_BATCH,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_batch_limit(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }

    /// Number of `embed` requests served.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn dim(&self) -> usize {
        self.d
    }

    fn batch_limit(&self) -> usize {
        self.batch
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        Ok(texts
            .iter()
            .map(|t| mock_embed(t, self.d).into_iter().map(|v| v as f32).collect())
            .collect())
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    embeddings: Vec<Vec<f32>>,
}

/// Remote provider speaking `POST <base>/v1/embed`.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    client: JsonClient,
    d: usize,
    batch: usize,
}

impl HttpEmbedder {
    pub fn new(base_url: impl Into<String>, d: usize, timeout: Duration) -> Self {
        Self {
            client: JsonClient::new(base_url, timeout),
            d,
            batch: DEFAULT_BATCH,
        }
    }

    pub fn with_batch_limit(mut self, batch: usize) -> Self {
        self.batch = batch.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.client = self.client.with_retry(retry);
        self
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.client = self.client.with_token(token);
        self
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.d
    }

    fn batch_limit(&self) -> usize {
        self.batch
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f32>>> {
        let resp: EmbedResponse = self.client.post("/v1/embed", &EmbedRequest { texts })?;
        if resp.embeddings.len() != texts.len() {
            return Err(Error::Provider(format!(
                "{} embeddings returned for {} texts",
                resp.embeddings.len(),
                texts.len()
            )));
        }
        if let Some(bad) = resp.embeddings.iter().find(|e| e.len() != self.d) {
            return Err(Error::Provider(format!(
                "embedding of length {} from a provider declared as d={}",
                bad.len(),
                self.d
            )));
        }
        Ok(resp.embeddings)
    }
}

/// Raw provider vectors keyed by the 64-bit FNV-1a hash of the text.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EmbeddingCache {
    d: usize,
    order: Vec<u64>,
    entries: HashMap<u64, Vec<f32>>,
}

const HEADER_LEN: usize = 4 + 2 + 2 + 4 + 8;

impl EmbeddingCache {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            ..Self::default()
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&[f32]> {
        self.entries.get(&fnv1a64(text.as_bytes())).map(Vec::as_slice)
    }

    pub fn insert(&mut self, text: &str, vector: Vec<f32>) -> Result<()> {
        if vector.len() != self.d {
            return Err(Error::Dimension(format!(
                "vector of length {} for a d={} cache",
                vector.len(),
                self.d
            )));
        }
        let key = fnv1a64(text.as_bytes());
        if self.entries.insert(key, vector).is_none() {
            self.order.push(key);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.order.len() * (8 + 4 * self.d));
        out.extend_from_slice(CACHE_MAGIC);
        out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        out.extend_from_slice(&(self.order.len() as u64).to_le_bytes());
        for key in &self.order {
            out.extend_from_slice(&key.to_le_bytes());
            for v in &self.entries[key] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::data(format!("embedding cache: {msg}"));
        if bytes.len() < HEADER_LEN {
            return Err(bad("truncated header"));
        }
        if &bytes[0..4] != CACHE_MAGIC {
            return Err(bad("bad magic"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != CACHE_VERSION {
            return Err(bad(&format!("unsupported version {version}")));
        }
        let d = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let n = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        let record = 8 + 4 * d;
        let body = &bytes[HEADER_LEN..];
        if (body.len() as u64) != n.saturating_mul(record as u64) {
            return Err(bad(&format!("{} body bytes for {n} records of d={d}", body.len())));
        }
        let mut cache = Self::new(d);
        for chunk in body.chunks_exact(record) {
            let key = u64::from_le_bytes(chunk[0..8].try_into().expect("8 bytes"));
            let v = chunk[8..]
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if cache.entries.insert(key, v).is_none() {
                cache.order.push(key);
            }
        }
        Ok(cache)
    }

    /// Loads `path`, or returns an empty cache of width `d` when it does not exist.
    /// An existing file must have the same width.
    pub fn open(path: impl AsRef<Path>, d: usize) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Ok(Self::new(d));
        }
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        let cache = Self::from_bytes(&bytes)?;
        if cache.d != d {
            return Err(Error::Dimension(format!(
                "cache {} holds d={} vectors, provider has d={d}",
                path.display(),
                cache.d
            )));
        }
        Ok(cache)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(fs::File::create(path)?);
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }
}

/// Attach an embedding to every sample. Cache hits are used as-is; misses are
/// fetched in provider-sized batches (distinct texts only) and stored raw.
/// With `normalize`, the dataset receives the L2-normalized vector.
pub fn embed_dataset(
    dataset: &Dataset,
    provider: &dyn EmbeddingProvider,
    cache: &mut EmbeddingCache,
    normalize: bool,
) -> Result<Dataset> {
    let d = provider.dim();
    if cache.dim() != d {
        return Err(Error::Dimension(format!(
            "cache holds d={} vectors, provider has d={d}",
            cache.dim()
        )));
    }
    let texts = dataset
        .samples
        .iter()
        .map(|s| {
            s.text
                .as_deref()
                .ok_or_else(|| Error::data(format!("sample {:?} has no text to embed", s.id)))
        })
        .collect::<Result<Vec<&str>>>()?;

    let mut misses: Vec<String> = Vec::new();
    let mut queued = std::collections::HashSet::new();
    for &t in &texts {
        if cache.get(t).is_none() && queued.insert(t) {
            misses.push(t.to_string());
        }
    }
    for chunk in misses.chunks(provider.batch_limit().max(1)) {
        let vectors = provider.embed(chunk)?;
        if vectors.len() != chunk.len() {
            return Err(Error::Provider(format!(
                "{} embeddings returned for {} texts",
                vectors.len(),
                chunk.len()
            )));
        }
        for (text, v) in chunk.iter().zip(vectors) {
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Provider("non-finite embedding value".into()));
            }
            cache.insert(text, v)?;
        }
    }

    let mut out = dataset.clone();
    for (sample, text) in out.samples.iter_mut().zip(texts) {
        let raw = cache.get(text).expect("cached above");
        let v = if normalize {
            let mut w: Vec<f64> = raw.iter().map(|&x| f64::from(x)).collect();
            l2_normalize(&mut w);
            w.into_iter().map(|x| x as f32).collect()
        } else {
            raw.to_vec()
        };
        sample.embedding = Some(v);
    }
    Ok(out)
}
