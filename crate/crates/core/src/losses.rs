//! Temperature-scaled softmax, cross-entropy and the KL divergence from the
//! uniform distribution to the softmax output.
//!
//! All logarithms are natural; the entropy of the uniform target is `ln C`.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Softmax temperature, strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Temperature(t))
        } else {
            Err(Error::InvalidTemperature(t))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature::ONE
    }
}

impl fmt::Display for Temperature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn check_logits(logits: &[f64]) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::EmptyVector);
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

fn check_classes(logits: &[f64]) -> Result<()> {
    check_logits(logits)?;
    if logits.len() < 2 {
        return Err(Error::TooFewClasses(logits.len()));
    }
    Ok(())
}

/// `log Σ_j exp(f_j / T)`, computed with max subtraction.
pub fn log_sum_exp(logits: &[f64], t: Temperature) -> Result<f64> {
    check_logits(logits)?;
    let t = t.get();
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / t));
    let s: f64 = logits.iter().map(|&v| (v / t - max).exp()).sum();
    Ok(max + s.ln())
}

/// `log softmax(f / T)`.
pub fn log_softmax(logits: &[f64], t: Temperature) -> Result<Vector> {
    let lse = log_sum_exp(logits, t)?;
    let t = t.get();
    Ok(logits.iter().map(|&v| v / t - lse).collect())
}

pub fn softmax(logits: &[f64], t: Temperature) -> Result<Vector> {
    check_logits(logits)?;
    let tv = t.get();
    let max = logits.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v / tv));
    let mut out: Vec<f64> = logits.iter().map(|&v| (v / tv - max).exp()).collect();
    let s: f64 = out.iter().sum();
    for o in &mut out {
        *o /= s;
    }
    Ok(Vector::new(out))
}

/// `−log softmax(f / T)[label]`.
pub fn cross_entropy(logits: &[f64], label: usize, t: Temperature) -> Result<f64> {
    check_logits(logits)?;
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let lse = log_sum_exp(logits, t)?;
    Ok((lse - logits[label] / t.get()).max(0.0))
}

/// Gradient of [`cross_entropy`] with respect to the logits:
/// `(softmax(f / T) − e_label) / T`.
pub fn dce_dlogits(logits: &[f64], label: usize, t: Temperature) -> Result<Vector> {
    if label >= logits.len() {
        return Err(Error::LabelOutOfRange {
            label,
            classes: logits.len(),
        });
    }
    let mut g = softmax(logits, t)?;
    g[label] -= 1.0;
    let inv_t = 1.0 / t.get();
    for v in g.iter_mut() {
        *v *= inv_t;
    }
    Ok(g)
}

/// `D_KL(u ‖ softmax(f / T)) = −(1/C) Σ_c log softmax_c − ln C`.
pub fn kl_to_uniform(logits: &[f64], t: Temperature) -> Result<f64> {
    check_classes(logits)?;
    let c = logits.len() as f64;
    // Σ_c log softmax_c = Σ_c f_c / T − C·lse; centring the logits on their mean
    // removes the large common term before it can cancel.
    let mean = logits.iter().sum::<f64>() / c;
    let centred: Vec<f64> = logits.iter().map(|v| v - mean).collect();
    let centred_lse = log_sum_exp(&centred, t)?;
    Ok((centred_lse - c.ln()).max(0.0))
}

/// Closed-form gradient of [`kl_to_uniform`] with respect to the logits:
/// `∂/∂f_c = −(1 − C·softmax_c) / (C·T)`.
pub fn dkl_dlogits(logits: &[f64], t: Temperature) -> Result<Vector> {
    check_classes(logits)?;
    let c = logits.len() as f64;
    let p = softmax(logits, t)?;
    let scale = -1.0 / (c * t.get());
    Ok(p.iter().map(|&pc| scale * (1.0 - c * pc)).collect())
}

/// Index of the largest logit; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
