//! Experiment plumbing shared by the CLI and the acceptance suite: score
//! files, ablation sweeps, the 2-D gradient-norm surface and the pinned
//! desk-scale benchmark.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::data::{generate, FeatureLogitDataset, OodKind, SyntheticSpec, SyntheticSplit};
use crate::error::{Error, Result};
use crate::linalg::NormOrder;
use crate::losses::Temperature;
use crate::mahalanobis::{MahalanobisEstimator, DEFAULT_LAMBDA};
use crate::metrics::EvalReport;
use crate::nn::{MlpModel, ParamSelection};
use crate::scores::{gradnorm_backprop, score_dataset, ScoreConfig, ScoreData, ScoreMethod};
use crate::train::{self, TrainConfig, TrainLog};

/// Norm orders of the Lp ablation.
pub const NORM_GRID: [&str; 10] = ["0.3", "0.5", "0.8", "1", "2", "3", "4", "5", "6", "inf"];

/// Temperatures `2^-4 … 2^10`.
pub const TEMPERATURE_GRID: [f64; 15] = [
    0.0625, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0, 512.0, 1024.0,
];

/// One score per line, 17 significant digits, so every `f64` round-trips.
pub fn format_scores(scores: &[f64]) -> String {
    let mut out = String::with_capacity(scores.len() * 24);
    for s in scores {
        let _ = writeln!(out, "{s:.16e}");
    }
    out
}

pub fn parse_scores(text: &str) -> Result<Vec<f64>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim()
                .parse::<f64>()
                .map_err(|_| Error::Malformed(format!("score line {}: {l:?}", i + 1)))
        })
        .collect()
}

pub fn write_scores(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    std::fs::write(path, format_scores(scores))?;
    Ok(())
}

pub fn read_scores(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    parse_scores(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Norm,
    Temperature,
    Selection,
    Method,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Norm => "norm",
            SweepAxis::Temperature => "temperature",
            SweepAxis::Selection => "selection",
            SweepAxis::Method => "method",
        }
    }

    /// Default value list for the axis, given the model's depth.
    pub fn default_values(self, layers: usize) -> Vec<String> {
        match self {
            SweepAxis::Norm => NORM_GRID.iter().map(|s| s.to_string()).collect(),
            SweepAxis::Temperature => TEMPERATURE_GRID.iter().map(|t| t.to_string()).collect(),
            SweepAxis::Selection => (0..layers)
                .map(|k| format!("layer:{k}"))
                .chain(["all".to_string(), "last".to_string()])
                .collect(),
            SweepAxis::Method => [
                "gradnorm", "onehot", "kl", "u", "v", "msp", "odin", "energy",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    /// `base` with this axis set to `value`.
    pub fn apply(self, base: &ScoreConfig, value: &str) -> Result<ScoreConfig> {
        let mut cfg = *base;
        match self {
            SweepAxis::Norm => cfg.norm = value.parse()?,
            SweepAxis::Temperature => {
                let t: f64 = value
                    .parse()
                    .map_err(|_| Error::config("temperature", format!("cannot parse {value:?}")))?;
                cfg.temperature = Temperature::new(t)?;
            }
            SweepAxis::Selection => cfg.selection = value.parse()?,
            SweepAxis::Method => {
                cfg = ScoreConfig::new(value.parse()?);
                if cfg.method == ScoreMethod::Odin {
                    cfg.temperature = Temperature::new(1000.0)?;
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "norm" => Ok(SweepAxis::Norm),
            "temperature" => Ok(SweepAxis::Temperature),
            "selection" => Ok(SweepAxis::Selection),
            "method" => Ok(SweepAxis::Method),
            _ => Err(Error::config(
                "axis",
                format!("unknown {s:?}; expected norm|temperature|selection|method"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub ood: String,
    pub value: String,
    pub report: EvalReport,
}

/// A named OOD set for sweeps.
pub struct OodSet<'a> {
    pub name: String,
    pub data: &'a FeatureLogitDataset,
}

/// Runs `axis` over `values` against every OOD set. Rows are ordered by OOD
/// set, then by value in the given order. ID scores are computed once per
/// value.
pub fn run_sweep(
    model: &MlpModel,
    id: &FeatureLogitDataset,
    oods: &[OodSet<'_>],
    base: &ScoreConfig,
    axis: SweepAxis,
    values: &[String],
    estimator: Option<&MahalanobisEstimator>,
) -> Result<Vec<SweepRow>> {
    let mut per_value = Vec::with_capacity(values.len());
    for v in values {
        let cfg = axis.apply(base, v)?;
        let id_scores = score_dataset(ScoreData::Model { model, inputs: id }, &cfg, estimator)?;
        let mut reports = Vec::with_capacity(oods.len());
        for set in oods {
            let ood = score_dataset(
                ScoreData::Model {
                    model,
                    inputs: set.data,
                },
                &cfg,
                estimator,
            )?;
            reports.push(EvalReport::evaluate(cfg.method.name(), &id_scores, &ood)?);
        }
        per_value.push(reports);
    }
    let mut rows = Vec::new();
    for (k, set) in oods.iter().enumerate() {
        for (v, reports) in values.iter().zip(&per_value) {
            rows.push(SweepRow {
                ood: set.name.clone(),
                value: v.clone(),
                report: reports[k].clone(),
            });
        }
    }
    Ok(rows)
}

/// CSV with header `ood,value,fpr95,auroc`.
pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("ood,value,fpr95,auroc\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            r.ood, r.value, r.report.fpr95, r.report.auroc
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfacePoint {
    pub x1: f64,
    pub x2: f64,
    pub score: f64,
}

/// GradNorm (L1, last-layer weights, T = 1) on a `steps × steps` grid over
/// `[lo, hi]²`. Rows are ordered with `x1` outer and `x2` inner.
pub fn gradnorm_surface(
    model: &MlpModel,
    lo: f64,
    hi: f64,
    steps: usize,
) -> Result<Vec<SurfacePoint>> {
    if model.input_dim() != 2 {
        return Err(Error::config(
            "model",
            format!(
                "surface needs a 2-D input model, got input dim {}",
                model.input_dim()
            ),
        ));
    }
    if steps == 0 || !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::config(
            "grid",
            format!("need lo < hi and steps >= 1, got {lo} {hi} {steps}"),
        ));
    }
    let coord = |i: usize| {
        if steps == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (steps - 1) as f64
        }
    };
    let cfg = ScoreConfig::new(ScoreMethod::GradNorm);
    let mut out = Vec::with_capacity(steps * steps);
    for i in 0..steps {
        for j in 0..steps {
            let (x1, x2) = (coord(i), coord(j));
            out.push(SurfacePoint {
                x1,
                x2,
                score: gradnorm_backprop(model, &[x1, x2], &cfg)?,
            });
        }
    }
    Ok(out)
}

pub fn surface_csv(points: &[SurfacePoint]) -> String {
    let mut out = String::from("x1,x2,score\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.x1, p.x2, p.score);
    }
    out
}

/// Fits the Mahalanobis estimator on penultimate features of labelled
/// inputs.
pub fn fit_mahalanobis(
    model: &MlpModel,
    inputs: &FeatureLogitDataset,
    lambda: f64,
) -> Result<MahalanobisEstimator> {
    let ex = train::extract(model, inputs)?;
    let labels = ex
        .labels()
        .ok_or_else(|| Error::config("data", "Mahalanobis fit needs labels"))?;
    let features = ex
        .features()
        .ok_or_else(|| Error::config("data", "Mahalanobis fit needs features"))?;
    MahalanobisEstimator::fit(
        features,
        ex.feature_dim(),
        labels,
        model.output_dim(),
        lambda,
    )
}

/// Fixed configuration of the desk-scale benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub data: SyntheticSpec,
    pub hidden: Vec<usize>,
    pub model_seed: u64,
    pub train: TrainConfig,
}

impl Default for BenchmarkConfig {
    /// 4 Gaussian blobs in 8-D (radius 4, σ = 0.9, 500 per class), OOD on a
    /// sphere of radius 2.4 (shift 0.6), an 8-32-4 MLP trained for 100
    /// epochs. Everything is seeded from 0.
    fn default() -> Self {
        BenchmarkConfig {
            data: SyntheticSpec {
                ood_kind: OodKind::Ring,
                dim: 8,
                classes: 4,
                samples_per_class: 500,
                class_center_scale: 4.0,
                noise_sigma: 0.9,
                ood_shift: 0.6,
                ood_samples: 0,
                seed: 0,
            },
            hidden: vec![32],
            model_seed: 0,
            train: TrainConfig {
                epochs: 100,
                batch_size: 32,
                learning_rate: 0.05,
                lr_decay_factor: 0.1,
                decay_epochs: Vec::new(),
                seed: 0,
            },
        }
    }
}

impl BenchmarkConfig {
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.data.dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.data.classes))
            .collect()
    }
}

pub struct Benchmark {
    pub config: BenchmarkConfig,
    pub split: SyntheticSplit,
    pub model: MlpModel,
    pub log: TrainLog,
    pub train_accuracy: f64,
}

impl Benchmark {
    pub fn run(config: BenchmarkConfig) -> Result<Self> {
        let split = generate(&config.data)?;
        let mut model = MlpModel::init(&config.dims(), config.model_seed)?;
        let log = train::train(&mut model, &split.id_train, &config.train)?;
        let train_accuracy = train::accuracy(&model, &split.id_train)?;
        Ok(Benchmark {
            config,
            split,
            model,
            log,
            train_accuracy,
        })
    }

    pub fn scores(
        &self,
        cfg: &ScoreConfig,
        set: &FeatureLogitDataset,
        est: Option<&MahalanobisEstimator>,
    ) -> Result<Vec<f64>> {
        score_dataset(
            ScoreData::Model {
                model: &self.model,
                inputs: set,
            },
            cfg,
            est,
        )
    }

    pub fn evaluate(
        &self,
        cfg: &ScoreConfig,
        est: Option<&MahalanobisEstimator>,
    ) -> Result<EvalReport> {
        let id = self.scores(cfg, &self.split.id_test, est)?;
        let ood = self.scores(cfg, &self.split.ood_test, est)?;
        EvalReport::evaluate(cfg.method.name(), &id, &ood)
    }

    pub fn mahalanobis(&self) -> Result<MahalanobisEstimator> {
        fit_mahalanobis(&self.model, &self.split.id_train, DEFAULT_LAMBDA)
    }

    pub fn sweep(
        &self,
        base: &ScoreConfig,
        axis: SweepAxis,
        values: &[String],
    ) -> Result<Vec<SweepRow>> {
        run_sweep(
            &self.model,
            &self.split.id_test,
            &[OodSet {
                name: "ring".into(),
                data: &self.split.ood_test,
            }],
            base,
            axis,
            values,
            None,
        )
    }
}

/// GradNorm with last-layer weights, L1 and the given temperature.
pub fn gradnorm_config(t: f64, norm: NormOrder, selection: ParamSelection) -> Result<ScoreConfig> {
    Ok(ScoreConfig::new(ScoreMethod::GradNorm)
        .with_temperature(Temperature::new(t)?)
        .with_norm(norm)
        .with_selection(selection))
}
