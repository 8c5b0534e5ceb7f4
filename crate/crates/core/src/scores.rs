//! Per-sample OOD scores. Every method returns "higher = more
//! in-distribution": one-hot gradient norms, energies and Mahalanobis
//! distances are negated where needed.

use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::data::FeatureLogitDataset;
use crate::error::{Error, Result};
use crate::linalg::{lp_norm, NormOrder, Vector};
use crate::losses::{self, argmax, Temperature};
use crate::mahalanobis::MahalanobisEstimator;
use crate::nn::{Gradients, MlpModel, ParamSelection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScoreMethod {
    /// Norm of the KL-to-uniform gradient via backpropagation.
    GradNorm,
    /// `U·V / (C·T)` from features and logits; L1 over last-layer weights only.
    GradNormClosedForm,
    /// Negated norm of the cross-entropy gradient at the predicted class.
    OneHotGradNorm,
    DirectKl,
    UFeature,
    VOutput,
    Msp,
    Odin,
    Energy,
    Mahalanobis,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 10] = [
        ScoreMethod::GradNorm,
        ScoreMethod::GradNormClosedForm,
        ScoreMethod::OneHotGradNorm,
        ScoreMethod::DirectKl,
        ScoreMethod::UFeature,
        ScoreMethod::VOutput,
        ScoreMethod::Msp,
        ScoreMethod::Odin,
        ScoreMethod::Energy,
        ScoreMethod::Mahalanobis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::GradNorm => "gradnorm",
            ScoreMethod::GradNormClosedForm => "gradnorm-closed",
            ScoreMethod::OneHotGradNorm => "onehot",
            ScoreMethod::DirectKl => "kl",
            ScoreMethod::UFeature => "u",
            ScoreMethod::VOutput => "v",
            ScoreMethod::Msp => "msp",
            ScoreMethod::Odin => "odin",
            ScoreMethod::Energy => "energy",
            ScoreMethod::Mahalanobis => "mahalanobis",
        }
    }

    /// Needs the network itself, not just extracted features and logits.
    pub fn needs_model(self) -> bool {
        matches!(self, ScoreMethod::GradNorm | ScoreMethod::OneHotGradNorm)
    }

    pub fn needs_features(self) -> bool {
        matches!(
            self,
            ScoreMethod::GradNormClosedForm | ScoreMethod::UFeature | ScoreMethod::Mahalanobis
        )
    }

    pub fn needs_logits(self) -> bool {
        matches!(
            self,
            ScoreMethod::GradNormClosedForm
                | ScoreMethod::DirectKl
                | ScoreMethod::VOutput
                | ScoreMethod::Msp
                | ScoreMethod::Odin
                | ScoreMethod::Energy
        )
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for ScoreMethod {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreMethod::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = ScoreMethod::ALL.iter().map(|m| m.name()).collect();
                Error::config(
                    "method",
                    format!("unknown {s:?}; expected one of {}", names.join("|")),
                )
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreConfig {
    pub method: ScoreMethod,
    pub temperature: Temperature,
    pub norm: NormOrder,
    pub selection: ParamSelection,
    /// ODIN input-perturbation magnitude.
    pub epsilon: f64,
}

impl ScoreConfig {
    pub fn new(method: ScoreMethod) -> Self {
        ScoreConfig {
            method,
            temperature: Temperature::ONE,
            norm: NormOrder::L1,
            selection: ParamSelection::LastLayerWeight,
            epsilon: 0.0,
        }
    }

    pub fn with_temperature(mut self, t: Temperature) -> Self {
        self.temperature = t;
        self
    }

    pub fn with_norm(mut self, norm: NormOrder) -> Self {
        self.norm = norm;
        self
    }

    pub fn with_selection(mut self, selection: ParamSelection) -> Self {
        self.selection = selection;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::config(
                "epsilon",
                format!("must be >= 0, got {}", self.epsilon),
            ));
        }
        if self.method == ScoreMethod::GradNormClosedForm
            && (!self.norm.is_l1() || self.selection != ParamSelection::LastLayerWeight)
        {
            return Err(Error::Incompatible {
                method: self.method.to_string(),
                detail: format!(
                    "norm {} with selection {}; the closed form holds only for L1 over last-layer weights",
                    self.norm, self.selection
                ),
            });
        }
        Ok(())
    }
}

fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        Err(Error::NonFinite)
    } else {
        Ok(())
    }
}

/// Parameter and input gradients of `D_KL(u ‖ softmax(f(x)/T))`.
pub fn kl_gradients(model: &MlpModel, x: &[f64], t: Temperature) -> Result<Gradients> {
    let (logits, trace) = model.forward(x)?;
    let upstream = losses::dkl_dlogits(&logits, t)?;
    model.backward(&trace, &upstream)
}

/// Parameter and input gradients of the cross-entropy at `label`.
pub fn ce_gradients(
    model: &MlpModel,
    x: &[f64],
    label: usize,
    t: Temperature,
) -> Result<Gradients> {
    let (logits, trace) = model.forward(x)?;
    let upstream = losses::dce_dlogits(&logits, label, t)?;
    model.backward(&trace, &upstream)
}

/// `‖∂D_KL(u ‖ softmax(f(x)/T)) / ∂w‖_p` over the selected parameters.
pub fn gradnorm_backprop(model: &MlpModel, x: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    let grads = kl_gradients(model, x, cfg.temperature)?;
    lp_norm(&grads.select(cfg.selection)?, cfg.norm)
}

/// Sum of absolute feature values.
pub fn u_score(features: &[f64]) -> Result<f64> {
    check_finite(features)?;
    Ok(features.iter().map(|v| v.abs()).sum())
}

/// `Σ_j |1 − C·softmax_j(f / T)|`, in `[0, 2(C − 1)]`.
pub fn v_score(logits: &[f64], t: Temperature) -> Result<f64> {
    if logits.len() < 2 {
        return Err(Error::TooFewClasses(logits.len()));
    }
    let c = logits.len() as f64;
    let p = losses::softmax(logits, t)?;
    Ok(p.iter().map(|pj| (1.0 - c * pj).abs()).sum())
}

/// L1 norm of the KL gradient with respect to the last-layer weight matrix
/// without backpropagation: `U · V / (C · T)`.
pub fn gradnorm_closed_form(features: &[f64], logits: &[f64], t: Temperature) -> Result<f64> {
    let u = u_score(features)?;
    let v = v_score(logits, t)?;
    Ok(u * v / (logits.len() as f64 * t.get()))
}

/// Negated norm of the cross-entropy gradient taken at the predicted class
/// (lowest index on ties). Always `<= 0`.
pub fn onehot_gradnorm(model: &MlpModel, x: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    let (logits, trace) = model.forward(x)?;
    let predicted = argmax(&logits);
    let upstream = losses::dce_dlogits(&logits, predicted, cfg.temperature)?;
    let grads = model.backward(&trace, &upstream)?;
    Ok(-lp_norm(&grads.select(cfg.selection)?, cfg.norm)?)
}

pub fn direct_kl_score(logits: &[f64], t: Temperature) -> Result<f64> {
    losses::kl_to_uniform(logits, t)
}

/// Maximum softmax probability at temperature 1.
pub fn msp_score(logits: &[f64]) -> Result<f64> {
    max_softmax(logits, Temperature::ONE)
}

fn max_softmax(logits: &[f64], t: Temperature) -> Result<f64> {
    let p = losses::softmax(logits, t)?;
    Ok(p.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Negative energy: `log Σ_c exp(f_c)`.
pub fn energy_score(logits: &[f64]) -> Result<f64> {
    losses::log_sum_exp(logits, Temperature::ONE)
}

/// Max softmax at temperature `T` after the input is nudged by
/// `−ε · sign(∇_x CE(f(x), ŷ, T))`. With `ε = 0` this is plain
/// temperature-scaled MSP.
pub fn odin_score(model: &MlpModel, x: &[f64], cfg: &ScoreConfig) -> Result<f64> {
    let t = cfg.temperature;
    let (logits, trace) = model.forward(x)?;
    if cfg.epsilon == 0.0 {
        return max_softmax(&logits, t);
    }
    let predicted = argmax(&logits);
    let upstream = losses::dce_dlogits(&logits, predicted, t)?;
    let grads = model.backward(&trace, &upstream)?;
    let perturbed: Vec<f64> = x
        .iter()
        .zip(grads.input.iter())
        .map(|(xi, gi)| {
            let sign = if *gi > 0.0 {
                1.0
            } else if *gi < 0.0 {
                -1.0
            } else {
                0.0
            };
            xi - cfg.epsilon * sign
        })
        .collect();
    max_softmax(&model.logits(&perturbed)?, t)
}

/// One sample, in whichever form is available.
#[derive(Debug, Clone, Copy)]
pub enum SampleView<'a> {
    Input {
        model: &'a MlpModel,
        x: &'a [f64],
    },
    Extracted {
        features: Option<&'a [f64]>,
        logits: Option<&'a [f64]>,
    },
}

/// Scores one sample. Model-form samples can serve every method (features
/// and logits come from a forward pass); extracted samples cannot serve the
/// backprop methods or ODIN with `ε > 0`.
pub fn score_sample(
    view: SampleView<'_>,
    cfg: &ScoreConfig,
    estimator: Option<&MahalanobisEstimator>,
) -> Result<f64> {
    use ScoreMethod::*;
    let t = cfg.temperature;
    match view {
        SampleView::Input { model, x } => match cfg.method {
            GradNorm => gradnorm_backprop(model, x, cfg),
            OneHotGradNorm => onehot_gradnorm(model, x, cfg),
            Odin => odin_score(model, x, cfg),
            _ => {
                let (features, logits) = model.features_and_logits(x)?;
                score_extracted(&features, &logits, cfg, estimator)
            }
        },
        SampleView::Extracted { features, logits } => {
            if cfg.method.needs_model() || (cfg.method == Odin && cfg.epsilon > 0.0) {
                return Err(incompatible(
                    cfg,
                    "extracted features/logits (a model is required)",
                ));
            }
            let f = features.unwrap_or(&[]);
            let l = logits.unwrap_or(&[]);
            if cfg.method.needs_features() && features.is_none() {
                return Err(incompatible(cfg, "data without features"));
            }
            if cfg.method.needs_logits() && logits.is_none() {
                return Err(incompatible(cfg, "data without logits"));
            }
            if cfg.method == Odin {
                return max_softmax(l, t);
            }
            score_extracted(f, l, cfg, estimator)
        }
    }
}

fn score_extracted(
    features: &[f64],
    logits: &[f64],
    cfg: &ScoreConfig,
    estimator: Option<&MahalanobisEstimator>,
) -> Result<f64> {
    use ScoreMethod::*;
    let t = cfg.temperature;
    match cfg.method {
        GradNormClosedForm => gradnorm_closed_form(features, logits, t),
        UFeature => u_score(features),
        VOutput => v_score(logits, t),
        DirectKl => direct_kl_score(logits, t),
        Msp => msp_score(logits),
        Energy => energy_score(logits),
        Odin => max_softmax(logits, t),
        Mahalanobis => estimator
            .ok_or_else(|| incompatible(cfg, "no fitted Mahalanobis estimator"))?
            .score(features),
        GradNorm | OneHotGradNorm => Err(incompatible(cfg, "extracted features/logits")),
    }
}

fn incompatible(cfg: &ScoreConfig, detail: &str) -> Error {
    Error::Incompatible {
        method: cfg.method.to_string(),
        detail: detail.to_string(),
    }
}

/// A whole dataset in one of the two forms.
#[derive(Debug, Clone, Copy)]
pub enum ScoreData<'a> {
    /// Raw inputs (stored as dataset features) run through a model.
    Model {
        model: &'a MlpModel,
        inputs: &'a FeatureLogitDataset,
    },
    /// Pre-extracted penultimate features and/or logits.
    Extracted(&'a FeatureLogitDataset),
}

impl ScoreData<'_> {
    pub fn len(&self) -> usize {
        match self {
            ScoreData::Model { inputs, .. } => inputs.len(),
            ScoreData::Extracted(ds) => ds.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn describe(&self) -> String {
        match self {
            ScoreData::Model { model, .. } => {
                format!("model form (input dim {})", model.input_dim())
            }
            ScoreData::Extracted(ds) => format!(
                "extracted form (features: {}, logits: {})",
                if ds.has_features() { "yes" } else { "no" },
                if ds.has_logits() { "yes" } else { "no" }
            ),
        }
    }

    fn view(&self, i: usize) -> SampleView<'_> {
        match *self {
            ScoreData::Model { model, inputs } => SampleView::Input {
                model,
                x: inputs.feature_row(i).expect("checked in score_dataset"),
            },
            ScoreData::Extracted(ds) => SampleView::Extracted {
                features: ds.feature_row(i),
                logits: ds.logit_row(i),
            },
        }
    }
}

/// Worker count: `GRADNORM_OOD_THREADS` if set to a positive integer,
/// otherwise the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("GRADNORM_OOD_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Scores every sample in order. The method/data-form combination is
/// checked up front; samples are split into contiguous chunks across
/// [`worker_count`] threads and reassembled in order, so the output matches a
/// sequential run bit for bit.
pub fn score_dataset(
    data: ScoreData<'_>,
    cfg: &ScoreConfig,
    estimator: Option<&MahalanobisEstimator>,
) -> Result<Vec<f64>> {
    score_dataset_with_workers(data, cfg, estimator, worker_count())
}

pub fn score_dataset_with_workers(
    data: ScoreData<'_>,
    cfg: &ScoreConfig,
    estimator: Option<&MahalanobisEstimator>,
    workers: usize,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    let form_error = |detail: String| Error::Incompatible {
        method: cfg.method.to_string(),
        detail: format!("{}: {detail}", data.describe()),
    };
    match data {
        ScoreData::Model { model, inputs } => {
            if !inputs.is_empty()
                && (!inputs.has_features() || inputs.feature_dim() != model.input_dim())
            {
                return Err(Error::shape(format!(
                    "model expects inputs of width {}, dataset has width {}",
                    model.input_dim(),
                    inputs.feature_dim()
                )));
            }
        }
        ScoreData::Extracted(ds) => {
            if cfg.method.needs_model() {
                return Err(form_error("a model is required".into()));
            }
            if cfg.method == ScoreMethod::Odin && cfg.epsilon > 0.0 {
                return Err(form_error(
                    "input perturbation (epsilon > 0) requires a model".into(),
                ));
            }
            if cfg.method.needs_features() && !ds.has_features() && !ds.is_empty() {
                return Err(form_error("features are required".into()));
            }
            if cfg.method.needs_logits() && !ds.has_logits() && !ds.is_empty() {
                return Err(form_error("logits are required".into()));
            }
        }
    }
    if cfg.method == ScoreMethod::Mahalanobis && estimator.is_none() {
        return Err(form_error(
            "no fitted Mahalanobis estimator supplied".into(),
        ));
    }

    let n = data.len();
    let workers = workers.max(1).min(n.max(1));
    if workers <= 1 {
        return (0..n)
            .map(|i| score_sample(data.view(i), cfg, estimator))
            .collect();
    }
    let chunk = n.div_ceil(workers);
    let parts: Vec<Result<Vec<f64>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..n)
            .step_by(chunk)
            .map(|start| {
                let end = (start + chunk).min(n);
                s.spawn(move || {
                    (start..end)
                        .map(|i| score_sample(data.view(i), cfg, estimator))
                        .collect::<Result<Vec<f64>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scoring worker panicked"))
            .collect()
    });
    let mut out = Vec::with_capacity(n);
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

/// Convenience: scores of raw input rows.
pub fn score_inputs(model: &MlpModel, inputs: &[Vector], cfg: &ScoreConfig) -> Result<Vec<f64>> {
    let ds = FeatureLogitDataset::from_inputs(inputs, None)?;
    score_dataset(ScoreData::Model { model, inputs: &ds }, cfg, None)
}
