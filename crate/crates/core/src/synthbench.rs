//! Seeded, imbalanced, embedding-like classification data, plus the
//! embedding-space "jitter" stand-in for generative augmentation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{AugmentationPlan, Dataset, Origin, Sample};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, substream_rng, Stream};

pub const DEFAULT_JITTER_SIGMA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub class_counts: Vec<usize>,
    pub dim: usize,
    /// Norm of each class mean.
    pub separation: f64,
    /// Per-coordinate gaussian noise before normalization.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    /// Seven classes with a long tail, 32 dimensions.
    pub fn default_profile(seed: u64) -> Self {
        Self {
            class_counts: vec![1000, 500, 250, 120, 60, 30, 15],
            dim: 32,
            separation: 1.0,
            noise: 0.8,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_counts.len() < 2 {
            return Err(Error::Config("at least 2 classes are required".into()));
        }
        if let Some(n) = self.class_counts.iter().find(|&&n| n < 3) {
            return Err(Error::Config(format!("every class needs at least 3 samples, got {n}")));
        }
        if self.dim == 0 {
            return Err(Error::Config("dim must be >= 1".into()));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("separation must be > 0".into()));
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return Err(Error::Config("noise must be > 0".into()));
        }
        Ok(())
    }

    /// Class labels `class_0`, `class_1`, … zero-padded so lexicographic order matches index order.
    pub fn labels(&self) -> Vec<String> {
        let width = (self.class_counts.len() - 1).to_string().len();
        (0..self.class_counts.len()).map(|i| format!("class_{i:0width$}")).collect()
    }
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Scales `v` to unit L2 norm. A zero vector is returned unchanged.
pub fn l2_normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, Stream::Synth);
    let labels = spec.labels();
    let means: Vec<Vec<f64>> = (0..labels.len())
        .map(|_| {
            let mut m = gaussian(&mut rng, spec.dim);
            l2_normalize(&mut m);
            m.iter().map(|x| x * spec.separation).collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(spec.class_counts.iter().sum());
    for (c, (&count, label)) in spec.class_counts.iter().zip(&labels).enumerate() {
        for i in 0..count {
            let mut x: Vec<f64> = means[c]
                .iter()
                .zip(gaussian(&mut rng, spec.dim))
                .map(|(m, z)| m + spec.noise * z)
                .collect();
            l2_normalize(&mut x);
            samples.push(Sample::new(format!("{label}-{i:06}"), label.clone()).with_embedding(to_f32(&x)));
        }
    }
    Ok(Dataset::new(samples))
}

/// Executes `plan` in embedding space: each synthetic copy is its parent's
/// embedding plus `sigma · N(0, I)`, renormalized to unit length.
pub fn jitter_augment(train: &Dataset, plan: &AugmentationPlan, sigma: f64, seed: u64) -> Result<Dataset> {
    plan.check_against(train)?;
    let mut out = train.samples.clone();
    for (idx, parent) in train.samples.iter().enumerate() {
        let r = plan.count_for(&parent.id);
        if r == 0 {
            continue;
        }
        let base = parent
            .embedding
            .as_ref()
            .ok_or_else(|| Error::data(format!("sample {:?} has no embedding to jitter", parent.id)))?;
        let mut rng = substream_rng(seed, Stream::Jitter, idx as u64);
        for i in 0..r {
            let mut x: Vec<f64> = base
                .iter()
                .zip(gaussian(&mut rng, base.len()))
                .map(|(&b, z)| f64::from(b) + sigma * z)
                .collect();
            l2_normalize(&mut x);
            out.push(Sample {
                id: format!("{}-aug-{i}", parent.id),
                label: parent.label.clone(),
                text: None,
                abstract_text: None,
                embedding: Some(to_f32(&x)),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{augmentation_plan, class_counts};

    #[test]
    fn deterministic_with_exact_counts() {
        let spec = SynthSpec {
            class_counts: vec![1000, 15],
            dim: 8,
            separation: 1.0,
            noise: 0.5,
            seed: 4,
        };
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a, generate_synthetic(&spec).unwrap());
        assert_eq!(class_counts(&a).counts, vec![1000, 15]);
        for s in &a.samples {
            let norm: f64 = s.embedding.as_ref().unwrap().iter().map(|&v| f64::from(v).powi(2)).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn labels_sort_in_index_order() {
        let spec = SynthSpec {
            class_counts: vec![3; 12],
            ..SynthSpec::default_profile(0)
        };
        let labels = spec.labels();
        let mut sorted = labels.clone();
        sorted.sort();
        assert_eq!(labels, sorted);
        assert_eq!(labels[0], "class_00");
    }

    #[test]
    fn normalize_is_exact_in_f64() {
        let mut v = gaussian(&mut stream_rng(1, Stream::Synth), 64);
        l2_normalize(&mut v);
        assert!((v.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn invalid_specs() {
        let base = SynthSpec::default_profile(0);
        assert!(generate_synthetic(&SynthSpec { class_counts: vec![10], ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthSpec { class_counts: vec![10, 2], ..base.clone() }).is_err());
        assert!(generate_synthetic(&SynthSpec { noise: 0.0, ..base }).is_err());
    }

    #[test]
    fn jitter_preserves_labels_and_counts() {
        let spec = SynthSpec {
            class_counts: vec![20, 6, 3],
            dim: 4,
            separation: 1.0,
            noise: 0.3,
            seed: 1,
        };
        let ds = generate_synthetic(&spec).unwrap();
        let plan = augmentation_plan(&ds, 1.0).unwrap();
        let aug = jitter_augment(&ds, &plan, DEFAULT_JITTER_SIGMA, 9).unwrap();
        assert_eq!(aug.len(), ds.len() + plan.total_synthetic());
        assert_eq!(class_counts(&aug).counts, vec![20, 20, 20]);
        for s in aug.samples.iter().filter(|s| s.origin == Origin::Synthetic) {
            let parent = ds.samples.iter().find(|p| Some(&p.id) == s.parent_id.as_ref()).unwrap();
            assert_eq!(parent.label, s.label);
        }
        assert_eq!(aug, jitter_augment(&ds, &plan, DEFAULT_JITTER_SIGMA, 9).unwrap());
    }
}
