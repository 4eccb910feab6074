//! Labeled samples, line-delimited JSON dataset files, class statistics,
//! stratified splitting and the class-inverse augmentation budget.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream_rng, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    #[default]
    Original,
    Synthetic,
}

/// Which partition a record was assigned to by [`stratified_split`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    pub id: String,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(rename = "abstract", default, skip_serializing_if = "Option::is_none")]
    pub abstract_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f32>>,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

impl Sample {
    pub fn new(id: impl Into<String>, label: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            label: label.into(),
            text: None,
            abstract_text: None,
            embedding: None,
            origin: Origin::Original,
            parent_id: None,
            split: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_embedding(mut self, embedding: Vec<f32>) -> Self {
        self.embedding = Some(embedding);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Embedding dimension shared by the samples that carry one.
    pub fn embedding_dim(&self) -> Option<usize> {
        self.samples.iter().find_map(|s| s.embedding.as_ref().map(Vec::len))
    }

    /// Checks unique ids, uniform embedding width, and that synthetic samples
    /// name an existing parent.
    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::with_capacity(self.samples.len());
        let mut dim = None;
        for (i, s) in self.samples.iter().enumerate() {
            let line = i + 1;
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Format {
                    line,
                    message: format!("duplicate id {:?}", s.id),
                });
            }
            if let Some(e) = &s.embedding {
                match dim {
                    None => dim = Some(e.len()),
                    Some(d) if d != e.len() => {
                        return Err(Error::Format {
                            line,
                            message: format!("embedding has {} dimensions, expected {d}", e.len()),
                        })
                    }
                    _ => {}
                }
                if !e.iter().all(|v| v.is_finite()) {
                    return Err(Error::Format {
                        line,
                        message: "non-finite embedding value".into(),
                    });
                }
            }
        }
        for (i, s) in self.samples.iter().enumerate() {
            if s.origin == Origin::Synthetic {
                match &s.parent_id {
                    Some(p) if ids.contains(p.as_str()) => {}
                    Some(p) => {
                        return Err(Error::Format {
                            line: i + 1,
                            message: format!("synthetic sample {:?} has unknown parent {p:?}", s.id),
                        })
                    }
                    None => {
                        return Err(Error::Format {
                            line: i + 1,
                            message: format!("synthetic sample {:?} has no parent_id", s.id),
                        })
                    }
                }
            }
        }
        Ok(())
    }

    /// Embeddings widened to f64, in sample order. Every sample must carry one.
    pub fn embeddings_f64(&self) -> Result<Vec<Vec<f64>>> {
        self.samples
            .iter()
            .map(|s| {
                s.embedding
                    .as_ref()
                    .map(|e| e.iter().map(|&v| f64::from(v)).collect())
                    .ok_or_else(|| Error::data(format!("sample {:?} has no embedding", s.id)))
            })
            .collect()
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = fs::File::open(path)?;
    read_dataset(BufReader::new(file))
}

pub fn read_dataset(reader: impl BufRead) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut ids: HashSet<String> = HashSet::new();
    let mut dim: Option<usize> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: Sample = serde_json::from_str(&line).map_err(|e| Error::Format {
            line: line_no,
            message: e.to_string(),
        })?;
        if !ids.insert(sample.id.clone()) {
            return Err(Error::Format {
                line: line_no,
                message: format!("duplicate id {:?}", sample.id),
            });
        }
        if let Some(e) = &sample.embedding {
            match dim {
                None => dim = Some(e.len()),
                Some(d) if d != e.len() => {
                    return Err(Error::Format {
                        line: line_no,
                        message: format!("embedding has {} dimensions, expected {d}", e.len()),
                    })
                }
                _ => {}
            }
        }
        samples.push(sample);
    }
    let ds = Dataset { samples };
    ds.validate()?;
    Ok(ds)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_dataset(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    for s in &dataset.samples {
        serde_json::to_writer(&mut out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Per-label counts with labels in lexicographic order (the canonical class index).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassStats {
    pub labels: Vec<String>,
    pub counts: Vec<usize>,
    pub total: usize,
}

impl ClassStats {
    pub fn num_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn count(&self, label: &str) -> Option<usize> {
        self.index_of(label).map(|i| self.counts[i])
    }
}

pub fn class_counts(dataset: &Dataset) -> ClassStats {
    counts_of(dataset.samples.iter())
}

fn counts_of<'a>(samples: impl Iterator<Item = &'a Sample>) -> ClassStats {
    let mut map: BTreeMap<&str, usize> = BTreeMap::new();
    let mut total = 0;
    for s in samples {
        *map.entry(s.label.as_str()).or_default() += 1;
        total += 1;
    }
    ClassStats {
        labels: map.keys().map(|s| s.to_string()).collect(),
        counts: map.values().copied().collect(),
        total,
    }
}

/// Largest-remainder apportionment of `n` items over integer `ratios`.
/// Remainder ties go to the lower index in `tie_order`.
pub fn apportion(n: usize, ratios: &[u32], tie_order: &[usize]) -> Vec<usize> {
    let denom: u128 = ratios.iter().map(|&r| u128::from(r)).sum();
    let mut counts: Vec<usize> = ratios
        .iter()
        .map(|&r| (n as u128 * u128::from(r) / denom) as usize)
        .collect();
    let rems: Vec<u128> = ratios.iter().map(|&r| n as u128 * u128::from(r) % denom).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = tie_order.to_vec();
    // Stable sort keeps tie_order among equal remainders.
    order.sort_by(|&a, &b| rems[b].cmp(&rems[a]));
    for &slot in order.iter().take(n - assigned) {
        counts[slot] += 1;
    }
    counts
}

/// Per-class seeded shuffle followed by largest-remainder apportionment.
///
/// `ratios` are (train, val, test). Remainder ties are broken val, test,
/// train. Each output keeps the input order of its samples and is tagged
/// with its split.
pub fn stratified_split(
    dataset: &Dataset,
    ratios: [u32; 3],
    seed: u64,
) -> Result<(Dataset, Dataset, Dataset)> {
    if ratios.iter().all(|&r| r == 0) {
        return Err(Error::Config("split ratios must not all be zero".into()));
    }
    let mut by_class: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.samples.iter().enumerate() {
        by_class.entry(s.label.as_str()).or_default().push(i);
    }
    let mut assignment = vec![Split::Train; dataset.len()];
    for (class_idx, (label, members)) in by_class.iter_mut().enumerate() {
        if members.len() < 3 {
            return Err(Error::Stratification {
                label: label.to_string(),
                count: members.len(),
            });
        }
        let mut rng = substream_rng(seed, Stream::Split, class_idx as u64);
        members.shuffle(&mut rng);
        let sizes = apportion(members.len(), &ratios, &[1, 2, 0]);
        let splits = [Split::Train, Split::Val, Split::Test];
        let mut offset = 0;
        for (size, split) in sizes.into_iter().zip(splits) {
            for &i in &members[offset..offset + size] {
                assignment[i] = split;
            }
            offset += size;
        }
    }
    let mut parts = [Vec::new(), Vec::new(), Vec::new()];
    for (sample, split) in dataset.samples.iter().zip(assignment) {
        let slot = match split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        };
        parts[slot].push(Sample {
            split: Some(split),
            ..sample.clone()
        });
    }
    let [train, val, test] = parts;
    Ok((Dataset::new(train), Dataset::new(val), Dataset::new(test)))
}

/// How many synthetic samples each class and each original sample receives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationPlan {
    pub multiplier: f64,
    /// Per-class target size `round(m · max_c N_c)`.
    pub target: usize,
    /// Synthetic total `S_c` per label.
    pub per_class: BTreeMap<String, usize>,
    /// Expansion count `R` per original sample id.
    pub per_sample: BTreeMap<String, usize>,
}

impl AugmentationPlan {
    pub fn total_synthetic(&self) -> usize {
        self.per_class.values().sum()
    }

    pub fn count_for(&self, id: &str) -> usize {
        self.per_sample.get(id).copied().unwrap_or(0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    /// Checks that the plan was built for the original samples of `dataset`.
    pub fn check_against(&self, dataset: &Dataset) -> Result<()> {
        let by_id: HashMap<&str, &Sample> = dataset.samples.iter().map(|s| (s.id.as_str(), s)).collect();
        let mut sums: BTreeMap<&str, usize> = BTreeMap::new();
        for (id, &r) in &self.per_sample {
            let sample = by_id
                .get(id.as_str())
                .ok_or_else(|| Error::data(format!("plan names sample {id:?} which is not in the dataset")))?;
            if sample.origin != Origin::Original {
                return Err(Error::data(format!("plan expands non-original sample {id:?}")));
            }
            *sums.entry(sample.label.as_str()).or_default() += r;
        }
        for (label, &s) in &self.per_class {
            let got = sums.get(label.as_str()).copied().unwrap_or(0);
            if got != s {
                return Err(Error::data(format!(
                    "plan assigns {got} expansions to class {label:?} but its total is {s}"
                )));
            }
        }
        if let Some(label) = sums.keys().find(|l| !self.per_class.contains_key(**l)) {
            return Err(Error::data(format!("plan has no class total for {label:?}")));
        }
        Ok(())
    }
}

/// Balance-to-target budget over the original samples of `dataset`.
///
/// `T = round(m · max_c N_c)`, `S_c = max(0, T − N_c)`. Every sample of class
/// `c` gets `⌊S_c / N_c⌋` expansions and the first `S_c mod N_c` samples in
/// ascending id order get one more.
pub fn augmentation_plan(dataset: &Dataset, multiplier: f64) -> Result<AugmentationPlan> {
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(Error::Config(format!("multiplier must be > 0, got {multiplier}")));
    }
    let mut by_class: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in dataset.samples.iter().filter(|s| s.origin == Origin::Original) {
        by_class.entry(s.label.as_str()).or_default().push(s.id.as_str());
    }
    let max = by_class
        .values()
        .map(Vec::len)
        .max()
        .ok_or_else(|| Error::data("cannot plan augmentation for an empty dataset"))?;
    let target = (multiplier * max as f64).round() as usize;

    let mut per_class = BTreeMap::new();
    let mut per_sample = BTreeMap::new();
    for (label, mut ids) in by_class {
        let n = ids.len();
        let s = target.saturating_sub(n);
        ids.sort_unstable();
        let (base, extra) = (s / n, s % n);
        for (rank, id) in ids.into_iter().enumerate() {
            per_sample.insert(id.to_string(), base + usize::from(rank < extra));
        }
        per_class.insert(label.to_string(), s);
    }
    Ok(AugmentationPlan {
        multiplier,
        target,
        per_class,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labeled(labels: &[(&str, usize)]) -> Dataset {
        let mut samples = Vec::new();
        for (label, n) in labels {
            for i in 0..*n {
                samples.push(Sample::new(format!("{label}-{i:04}"), *label));
            }
        }
        Dataset::new(samples)
    }

    #[test]
    fn counts_are_lexicographic() {
        let ds = Dataset::new(vec![Sample::new("1", "b"), Sample::new("2", "a"), Sample::new("3", "a")]);
        let stats = class_counts(&ds);
        assert_eq!(stats.labels, vec!["a", "b"]);
        assert_eq!(stats.counts, vec![2, 1]);
        assert_eq!(stats.total, 3);
        let empty = class_counts(&Dataset::default());
        assert_eq!((empty.total, empty.num_classes()), (0, 0));
    }

    #[test]
    fn seven_categories_of_4770() {
        let sizes = [1500, 1200, 800, 600, 400, 200, 70];
        let spec: Vec<(String, usize)> = sizes.iter().enumerate().map(|(i, &n)| (format!("cat{i}"), n)).collect();
        let refs: Vec<(&str, usize)> = spec.iter().map(|(l, n)| (l.as_str(), *n)).collect();
        let stats = class_counts(&labeled(&refs));
        assert_eq!((stats.num_classes(), stats.total), (7, 4770));
    }

    #[test]
    fn apportion_worked_cases() {
        assert_eq!(apportion(10, &[8, 1, 1], &[1, 2, 0]), vec![8, 1, 1]);
        assert_eq!(apportion(7, &[8, 1, 1], &[1, 2, 0]), vec![5, 1, 1]);
        assert_eq!(apportion(3, &[8, 1, 1], &[1, 2, 0]), vec![3, 0, 0]);
        assert_eq!(apportion(5, &[1, 1, 1], &[1, 2, 0]), vec![1, 2, 2]);
    }

    #[test]
    fn split_sizes_and_partition() {
        let ds = labeled(&[("a", 10), ("b", 7)]);
        let (train, val, test) = stratified_split(&ds, [8, 1, 1], 1).unwrap();
        let count = |d: &Dataset, l: &str| class_counts(d).count(l).unwrap_or(0);
        assert_eq!((count(&train, "a"), count(&val, "a"), count(&test, "a")), (8, 1, 1));
        assert_eq!((count(&train, "b"), count(&val, "b"), count(&test, "b")), (5, 1, 1));
        let mut ids: Vec<&str> = train.samples.iter().chain(&val.samples).chain(&test.samples).map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        let mut all: Vec<&str> = ds.samples.iter().map(|s| s.id.as_str()).collect();
        all.sort_unstable();
        assert_eq!(ids, all);
        assert!(val.samples.iter().all(|s| s.split == Some(Split::Val)));
    }

    #[test]
    fn split_exact_ratio_4770() {
        let ds = labeled(&[("a", 1500), ("b", 1200), ("c", 800), ("d", 600), ("e", 400), ("f", 200), ("g", 70)]);
        let (train, val, test) = stratified_split(&ds, [8, 1, 1], 3).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (3816, 477, 477));
    }

    #[test]
    fn split_is_seeded() {
        let ds = labeled(&[("a", 20), ("b", 9)]);
        let a = stratified_split(&ds, [8, 1, 1], 5).unwrap();
        let b = stratified_split(&ds, [8, 1, 1], 5).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&ds, [8, 1, 1], 6).unwrap();
        assert_ne!(a.1, c.1);
    }

    #[test]
    fn split_rejects_tiny_class() {
        let ds = labeled(&[("big", 10), ("tiny", 2)]);
        match stratified_split(&ds, [8, 1, 1], 0) {
            Err(Error::Stratification { label, count }) => assert_eq!((label.as_str(), count), ("tiny", 2)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn plan_examples() {
        let plan = augmentation_plan(&labeled(&[("a", 100), ("b", 20), ("c", 5)]), 1.0).unwrap();
        assert_eq!(plan.per_class.values().copied().collect::<Vec<_>>(), vec![0, 80, 95]);
        assert_eq!(plan.count_for("a-0000"), 0);
        assert!((0..20).all(|i| plan.count_for(&format!("b-{i:04}")) == 4));
        assert!((0..5).all(|i| plan.count_for(&format!("c-{i:04}")) == 19));

        let balanced = augmentation_plan(&labeled(&[("a", 4), ("b", 4)]), 1.0).unwrap();
        assert_eq!(balanced.total_synthetic(), 0);

        let plan = augmentation_plan(&labeled(&[("a", 10), ("b", 3)]), 2.0).unwrap();
        assert_eq!(plan.target, 20);
        assert_eq!(plan.per_class.values().copied().collect::<Vec<_>>(), vec![10, 17]);
        let r: Vec<usize> = (0..3).map(|i| plan.count_for(&format!("b-{i:04}"))).collect();
        assert_eq!(r, vec![6, 6, 5]);
        plan.check_against(&labeled(&[("a", 10), ("b", 3)])).unwrap();
    }

    #[test]
    fn plan_errors() {
        assert!(augmentation_plan(&Dataset::default(), 1.0).is_err());
        assert!(augmentation_plan(&labeled(&[("a", 2)]), 0.0).is_err());
        let plan = augmentation_plan(&labeled(&[("a", 3), ("b", 1)]), 1.0).unwrap();
        assert!(plan.check_against(&labeled(&[("a", 3)])).is_err());
    }

    #[test]
    fn read_errors_name_the_line() {
        let text = "{\"id\":\"a\",\"label\":\"x\",\"embedding\":[1,2,3]}\n{\"id\":\"b\",\"label\":\"x\",\"embedding\":[1,2]}\n";
        match read_dataset(text.as_bytes()) {
            Err(Error::Format { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let dup = "{\"id\":\"a\",\"label\":\"x\"}\n{\"id\":\"a\",\"label\":\"y\"}\n";
        assert!(matches!(read_dataset(dup.as_bytes()), Err(Error::Format { line: 2, .. })));
        assert!(matches!(read_dataset("not json\n".as_bytes()), Err(Error::Format { line: 1, .. })));
        let orphan = "{\"id\":\"a\",\"label\":\"x\",\"origin\":\"synthetic\",\"parent_id\":\"zz\"}\n";
        assert!(read_dataset(orphan.as_bytes()).is_err());
        assert!(read_dataset("".as_bytes()).unwrap().is_empty());
    }
}
