//! One-hidden-layer relu classifier with exact forward and backward passes.
//!
//! Weights are stored row-major: `w1` is `h × d`, `w2` is `c × h`. The
//! backward pass returns the gradient with respect to the input as well as
//! the parameters, which is what the adversarial perturbation consumes.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_HIDDEN_WIDTH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub d: usize,
    pub h: usize,
    pub c: usize,
    /// Seed the parameters were initialized from (recorded in model files).
    pub seed: u64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

/// Intermediates of one forward pass, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache {
    pub input: Vec<f64>,
    pub z1: Vec<f64>,
    pub a1: Vec<f64>,
    pub logits: Vec<f64>,
}

/// Gradients laid out exactly like [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

fn checked_dims(d: usize, h: usize, c: usize) -> Result<()> {
    if d == 0 || h == 0 || c == 0 {
        return Err(Error::Dimension(format!(
            "dimensions must be positive (d={d}, h={h}, C={c})"
        )));
    }
    let overflow = || Error::Dimension(format!("parameter count overflows (d={d}, h={h}, C={c})"));
    let w1 = h.checked_mul(d).ok_or_else(overflow)?;
    let w2 = c.checked_mul(h).ok_or_else(overflow)?;
    w1.checked_add(w2)
        .and_then(|n| n.checked_add(h))
        .and_then(|n| n.checked_add(c))
        .and_then(|n| n.checked_mul(std::mem::size_of::<f64>()))
        .filter(|&bytes| bytes <= isize::MAX as usize)
        .ok_or_else(overflow)?;
    Ok(())
}

impl MlpParams {
    /// He-initialized parameters: weights ~ N(0, 2/fan_in), zero biases.
    pub fn init(seed: u64, d: usize, h: usize, c: usize) -> Result<Self> {
        checked_dims(d, h, c)?;
        let mut rng = stream_rng(seed, Stream::Init);
        let mut draw = |n: usize, fan_in: usize| -> Vec<f64> {
            let scale = (2.0 / fan_in as f64).sqrt();
            (0..n)
                .map(|_| scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect()
        };
        let w1 = draw(h * d, d);
        let w2 = draw(c * h, h);
        Ok(Self {
            d,
            h,
            c,
            seed,
            w1,
            b1: vec![0.0; h],
            w2,
            b2: vec![0.0; c],
        })
    }

    pub fn zeros(d: usize, h: usize, c: usize) -> Result<Self> {
        checked_dims(d, h, c)?;
        Ok(Self {
            d,
            h,
            c,
            seed: 0,
            w1: vec![0.0; h * d],
            b1: vec![0.0; h],
            w2: vec![0.0; c * h],
            b2: vec![0.0; c],
        })
    }

    /// Checks array lengths against the declared dimensions and that every entry is finite.
    pub fn validate(&self) -> Result<()> {
        checked_dims(self.d, self.h, self.c)?;
        let expect = [
            ("w1", self.w1.len(), self.h * self.d),
            ("b1", self.b1.len(), self.h),
            ("w2", self.w2.len(), self.c * self.h),
            ("b2", self.b2.len(), self.c),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::Shape(format!("{name} has {got} entries, expected {want}")));
            }
        }
        if !self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite())) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    pub(crate) fn arrays(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub(crate) fn arrays_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.d {
            return Err(Error::Shape(format!("input has length {}, model expects {}", x.len(), self.d)));
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite input".into()));
        }
        let z1: Vec<f64> = self
            .w1
            .chunks_exact(self.d)
            .zip(&self.b1)
            .map(|(row, b)| dot(row, x) + b)
            .collect();
        let a1: Vec<f64> = z1.iter().map(|&z| if z > 0.0 { z } else { 0.0 }).collect();
        let logits = self
            .w2
            .chunks_exact(self.h)
            .zip(&self.b2)
            .map(|(row, b)| dot(row, &a1) + b)
            .collect();
        Ok(ForwardCache {
            input: x.to_vec(),
            z1,
            a1,
            logits,
        })
    }

    /// Gradients of a scalar loss whose logit-gradient is `dlogits`.
    pub fn backward(&self, cache: &ForwardCache, dlogits: &[f64]) -> Result<(ParamGrads, Vec<f64>)> {
        let mut grads = ParamGrads::zeros_like(self);
        let input_grad = self.backward_into(cache, dlogits, &mut grads)?;
        Ok((grads, input_grad))
    }

    /// Like [`backward`](Self::backward) but adds the parameter gradients into `grads`.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        dlogits: &[f64],
        grads: &mut ParamGrads,
    ) -> Result<Vec<f64>> {
        if dlogits.len() != self.c {
            return Err(Error::Shape(format!(
                "dlogits has length {}, model has {} classes",
                dlogits.len(),
                self.c
            )));
        }
        if cache.input.len() != self.d || cache.z1.len() != self.h || cache.a1.len() != self.h {
            return Err(Error::Shape("forward cache does not match model".into()));
        }
        if !dlogits.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite logit gradient".into()));
        }

        let mut dz1 = vec![0.0; self.h];
        for (k, &g) in dlogits.iter().enumerate() {
            grads.b2[k] += g;
            if g == 0.0 {
                continue;
            }
            let w_row = &self.w2[k * self.h..(k + 1) * self.h];
            let gw_row = &mut grads.w2[k * self.h..(k + 1) * self.h];
            for j in 0..self.h {
                gw_row[j] += g * cache.a1[j];
                dz1[j] += g * w_row[j];
            }
        }
        // relu'(0) = 0
        for (dz, &z) in dz1.iter_mut().zip(&cache.z1) {
            if z <= 0.0 {
                *dz = 0.0;
            }
        }

        let mut input_grad = vec![0.0; self.d];
        for (j, &g) in dz1.iter().enumerate() {
            grads.b1[j] += g;
            if g == 0.0 {
                continue;
            }
            let w_row = &self.w1[j * self.d..(j + 1) * self.d];
            let gw_row = &mut grads.w1[j * self.d..(j + 1) * self.d];
            for i in 0..self.d {
                gw_row[i] += g * cache.input[i];
                input_grad[i] += g * w_row[i];
            }
        }
        Ok(input_grad)
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.logits)
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax(&self.logits(x)?))
    }

    /// Argmax class; ties go to the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }
}

impl ParamGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Self {
            w1: vec![0.0; params.w1.len()],
            b1: vec![0.0; params.b1.len()],
            w2: vec![0.0; params.w2.len()],
            b2: vec![0.0; params.b2.len()],
        }
    }

    pub fn add_assign(&mut self, other: &ParamGrads) {
        for (dst, src) in self.arrays_mut().into_iter().zip(other.arrays()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|v| v.is_finite()))
    }

    pub fn is_zero(&self) -> bool {
        self.arrays().iter().all(|a| a.iter().all(|&v| v == 0.0))
    }

    pub(crate) fn arrays(&self) -> [&[f64]; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub(crate) fn arrays_mut(&mut self) -> [&mut [f64]; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
