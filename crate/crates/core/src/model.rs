//! Model file: a JSON document with the dimensions, seed, class labels and
//! every weight array as base64 of little-endian `f32` values, row-major.

use std::fs;
use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::MlpParams;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Trained classifier together with its class vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: MlpParams,
    /// Class labels in index order.
    pub labels: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDocument {
    format_version: u32,
    d: usize,
    h: usize,
    #[serde(rename = "C")]
    c: usize,
    seed: u64,
    labels: Vec<String>,
    w1: String,
    b1: String,
    w2: String,
    b2: String,
}

fn encode(values: &[f64]) -> String {
    let bytes: Vec<u8> = values.iter().flat_map(|&v| (v as f32).to_le_bytes()).collect();
    STANDARD.encode(bytes)
}

fn decode(name: &str, text: &str, expected: usize) -> Result<Vec<f64>> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| Error::data(format!("model field {name}: invalid base64: {e}")))?;
    if bytes.len() != expected * 4 {
        return Err(Error::data(format!(
            "model field {name}: {} bytes, expected {}",
            bytes.len(),
            expected * 4
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes([b[0], b[1], b[2], b[3]])))
        .collect())
}

impl Model {
    pub fn new(params: MlpParams, labels: Vec<String>) -> Result<Self> {
        if labels.len() != params.c {
            return Err(Error::Shape(format!(
                "{} labels for a {}-class model",
                labels.len(),
                params.c
            )));
        }
        Ok(Self { params, labels })
    }

    /// Weights rounded to `f32`, i.e. exactly what a save/load cycle yields.
    pub fn quantized(&self) -> Self {
        let mut params = self.params.clone();
        for arr in params.arrays_mut() {
            for v in arr {
                *v = f64::from(*v as f32);
            }
        }
        Self {
            params,
            labels: self.labels.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let p = &self.params;
        let doc = ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            d: p.d,
            h: p.h,
            c: p.c,
            seed: p.seed,
            labels: self.labels.clone(),
            w1: encode(&p.w1),
            b1: encode(&p.b1),
            w2: encode(&p.w2),
            b2: encode(&p.b2),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::data(format!(
                "unsupported model format_version {}",
                doc.format_version
            )));
        }
        let (d, h, c) = (doc.d, doc.h, doc.c);
        // Validate dims before trusting them for the size arithmetic below.
        MlpParams::zeros(d, h, c)?;
        let params = MlpParams {
            d,
            h,
            c,
            seed: doc.seed,
            w1: decode("w1", &doc.w1, h * d)?,
            b1: decode("b1", &doc.b1, h)?,
            w2: decode("w2", &doc.w2, c * h)?,
            b2: decode("b2", &doc.b2, c)?,
        };
        params.validate()?;
        Model::new(params, doc.labels)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn round_trip_is_exact_at_f32() {
        let model = Model::new(MlpParams::init(5, 6, 7, 3).unwrap(), labels(3)).unwrap();
        let loaded = Model::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(loaded, model.quantized());
        assert_eq!(loaded.to_json().unwrap(), model.to_json().unwrap());
    }

    #[test]
    fn rejects_wrong_lengths_and_labels() {
        let model = Model::new(MlpParams::init(5, 2, 2, 2).unwrap(), labels(2)).unwrap();
        let mut doc: serde_json::Value = serde_json::from_str(&model.to_json().unwrap()).unwrap();
        doc["h"] = 3.into();
        assert!(Model::from_json(&doc.to_string()).is_err());

        assert!(Model::new(MlpParams::init(5, 2, 2, 2).unwrap(), labels(3)).is_err());
    }

    #[test]
    fn rejects_non_finite_weights() {
        let mut p = MlpParams::zeros(1, 1, 1).unwrap();
        p.b2 = vec![f64::INFINITY];
        let text = Model { params: p, labels: labels(1) }.to_json().unwrap();
        assert!(matches!(Model::from_json(&text), Err(Error::Numeric(_))));
    }
}
