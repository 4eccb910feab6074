//! Confusion matrix and per-class, macro and weighted precision/recall/F1.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::Model;

/// Rows are true classes, columns predicted classes.
pub type Confusion = Vec<Vec<u64>>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub labels: Vec<String>,
    pub n: u64,
    pub confusion: Confusion,
    pub per_class: Vec<ClassScores>,
    #[serde(rename = "macro")]
    pub macro_avg: Scores,
    pub weighted: Scores,
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], classes: usize) -> Result<Confusion> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(format!(
            "{} true labels but {} predictions",
            truth.len(),
            pred.len()
        )));
    }
    let mut m = vec![vec![0u64; classes]; classes];
    for (&t, &p) in truth.iter().zip(pred) {
        for label in [t, p] {
            if label >= classes {
                return Err(Error::LabelOutOfRange { label, classes });
            }
        }
        m[t][p] += 1;
    }
    Ok(m)
}

/// Each row divided by its sum; empty rows stay zero.
pub fn row_normalized(confusion: &Confusion) -> Vec<Vec<f64>> {
    confusion
        .iter()
        .map(|row| {
            let total: u64 = row.iter().sum();
            row.iter()
                .map(|&v| if total == 0 { 0.0 } else { v as f64 / total as f64 })
                .collect()
        })
        .collect()
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per class with 0/0 defined as 0.
/// Labels default to the class index when `labels` is shorter than the matrix.
pub fn per_class_prf(confusion: &Confusion, labels: &[String]) -> Vec<ClassScores> {
    let c = confusion.len();
    (0..c)
        .map(|k| {
            let tp = confusion[k][k];
            let support: u64 = confusion[k].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[k]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                label: labels.get(k).cloned().unwrap_or_else(|| k.to_string()),
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect()
}

/// Macro (all classes, unweighted) and weighted (support-weighted) means.
pub fn aggregate_scores(per_class: &[ClassScores]) -> Result<(Scores, Scores)> {
    if per_class.is_empty() {
        return Err(Error::data("cannot aggregate scores over zero classes"));
    }
    let n = per_class.len() as f64;
    let macro_avg = Scores {
        precision: per_class.iter().map(|s| s.precision).sum::<f64>() / n,
        recall: per_class.iter().map(|s| s.recall).sum::<f64>() / n,
        f1: per_class.iter().map(|s| s.f1).sum::<f64>() / n,
    };
    let total: u64 = per_class.iter().map(|s| s.support).sum();
    if total == 0 {
        return Err(Error::data("cannot compute weighted scores: every class has zero support"));
    }
    let weighted_mean = |f: fn(&ClassScores) -> f64| {
        per_class
            .iter()
            .filter(|s| s.support > 0)
            .map(|s| f(s) * (s.support as f64 / total as f64))
            .sum::<f64>()
    };
    let weighted = Scores {
        precision: weighted_mean(|s| s.precision),
        recall: weighted_mean(|s| s.recall),
        f1: weighted_mean(|s| s.f1),
    };
    Ok((macro_avg, weighted))
}

impl EvalReport {
    pub fn from_predictions(truth: &[usize], pred: &[usize], labels: &[String]) -> Result<Self> {
        let confusion = confusion_matrix(truth, pred, labels.len())?;
        let per_class = per_class_prf(&confusion, labels);
        let (macro_avg, weighted) = aggregate_scores(&per_class)?;
        Ok(Self {
            labels: labels.to_vec(),
            n: truth.len() as u64,
            confusion,
            per_class,
            macro_avg,
            weighted,
        })
    }

    pub fn normalized_confusion(&self) -> Vec<Vec<f64>> {
        row_normalized(&self.confusion)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    /// Row-normalized confusion matrix as CSV: a header row of class labels,
    /// then one row per true class in label order.
    pub fn confusion_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.labels).map_err(|e| Error::data(e.to_string()))?;
        for row in self.normalized_confusion() {
            w.write_record(row.iter().map(|v| v.to_string()))
                .map_err(|e| Error::data(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::data(e.to_string()))
    }
}

/// Map dataset labels onto a model's class vocabulary.
pub fn label_indices(dataset: &Dataset, labels: &[String]) -> Result<Vec<usize>> {
    dataset
        .samples
        .iter()
        .map(|s| {
            labels
                .iter()
                .position(|l| *l == s.label)
                .ok_or_else(|| Error::data(format!("sample {:?} has label {:?} unknown to the model", s.id, s.label)))
        })
        .collect()
}

/// Evaluate `model` on every sample of `dataset` (all must carry embeddings).
pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<EvalReport> {
    if let Some(d) = dataset.embedding_dim() {
        if d != model.params.d {
            return Err(Error::Dimension(format!(
                "data embeddings have {d} dimensions but the model expects {}",
                model.params.d
            )));
        }
    }
    let truth = label_indices(dataset, &model.labels)?;
    let xs = dataset.embeddings_f64()?;
    let pred = xs
        .iter()
        .map(|x| model.params.predict(x))
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_predictions(&truth, &pred, &model.labels)
}
