//! Minibatch SGD on mean cross-entropy (temperature 1), and extraction of
//! penultimate features plus logits.

use serde::{Deserialize, Serialize};

use crate::data::FeatureLogitDataset;
use crate::error::{Error, Result};
use crate::losses::{self, argmax, Temperature};
use crate::nn::{Gradients, MlpModel};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplies the learning rate once for every entry of `decay_epochs`
    /// that has been reached.
    pub lr_decay_factor: f64,
    pub decay_epochs: Vec<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 0.05,
            lr_decay_factor: 0.1,
            decay_epochs: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be positive"));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config(
                "learning_rate",
                format!("must be finite and >= 0, got {}", self.learning_rate),
            ));
        }
        if !(self.lr_decay_factor.is_finite() && self.lr_decay_factor > 0.0) {
            return Err(Error::config("lr_decay_factor", "must be positive"));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&e| epoch >= e).count();
        self.learning_rate * self.lr_decay_factor.powi(decays as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch, measured before each batch update.
    pub loss: f64,
    pub accuracy: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

/// Mean cross-entropy and its parameter gradients over a batch of rows.
pub fn batch_loss_and_gradients(
    model: &MlpModel,
    data: &FeatureLogitDataset,
    rows: &[usize],
) -> Result<(f64, usize, Gradients)> {
    let mut total: Option<Gradients> = None;
    let mut loss = 0.0;
    let mut correct = 0;
    let scale = 1.0 / rows.len() as f64;
    for &i in rows {
        let x = data
            .feature_row(i)
            .ok_or_else(|| Error::config("data", "training data needs inputs"))?;
        let y = data
            .label(i)
            .ok_or_else(|| Error::config("data", "training data needs labels"))?;
        let (logits, trace) = model.forward(x)?;
        if y >= logits.len() {
            return Err(Error::LabelOutOfRange {
                label: y,
                classes: logits.len(),
            });
        }
        loss += losses::cross_entropy(&logits, y, Temperature::ONE)?;
        if argmax(&logits) == y {
            correct += 1;
        }
        let g = model.backward(&trace, &losses::dce_dlogits(&logits, y, Temperature::ONE)?)?;
        match total.as_mut() {
            None => {
                let mut g = g;
                g.scale(scale);
                total = Some(g);
            }
            Some(t) => t.add_scaled(&g, scale),
        }
    }
    let grads = total.ok_or_else(|| Error::config("batch", "empty batch"))?;
    Ok((loss * scale, correct, grads))
}

/// Trains `model` in place. Sample order is reshuffled every epoch from a
/// single `Rng` seeded with `cfg.seed`.
pub fn train(
    model: &mut MlpModel,
    data: &FeatureLogitDataset,
    cfg: &TrainConfig,
) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::config("data", "training set is empty"));
    }
    if data.feature_dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "model input dim {} but data width {}",
            model.input_dim(),
            data.feature_dim()
        )));
    }
    if data.labels().is_none() {
        return Err(Error::config("data", "training data needs labels"));
    }

    let mut rng = Rng::new(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = TrainLog::default();
    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at(epoch);
        rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let (loss, ok, grads) = batch_loss_and_gradients(model, data, batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss {loss} at epoch {epoch} (lr {lr})"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            correct += ok;
            if lr != 0.0 {
                model.sgd_step(&grads, lr);
            }
        }
        log.epochs.push(EpochStats {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
            lr,
        });
    }
    Ok(log)
}

/// Fraction of labelled rows whose argmax logit matches the label.
pub fn accuracy(model: &MlpModel, data: &FeatureLogitDataset) -> Result<f64> {
    if data.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0;
    for i in 0..data.len() {
        let x = data
            .feature_row(i)
            .ok_or_else(|| Error::config("data", "needs inputs"))?;
        let y = data
            .label(i)
            .ok_or_else(|| Error::config("data", "needs labels"))?;
        if argmax(&model.logits(x)?) == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Runs every input through `model` and keeps the penultimate activations
/// (the raw input for a single-layer model) and the logits. Labels are
/// copied when present.
pub fn extract(model: &MlpModel, inputs: &FeatureLogitDataset) -> Result<FeatureLogitDataset> {
    let n = inputs.len();
    if n == 0 {
        return FeatureLogitDataset::new(0, None, None, inputs.labels().map(<[u32]>::to_vec));
    }
    if inputs.feature_dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "model input dim {} but data width {}",
            model.input_dim(),
            inputs.feature_dim()
        )));
    }
    let (m, c) = (model.feature_dim(), model.output_dim());
    let mut features = Vec::with_capacity(n * m);
    let mut logits = Vec::with_capacity(n * c);
    for i in 0..n {
        let (f, l) = model.features_and_logits(inputs.feature_row(i).expect("width checked"))?;
        features.extend_from_slice(&f);
        logits.extend_from_slice(&l);
    }
    FeatureLogitDataset::new(
        n,
        Some((m, features)),
        Some((c, logits)),
        inputs.labels().map(<[u32]>::to_vec),
    )
}
