//! Command-line front end. Every command is a thin wrapper over the library;
//! each written file is announced by one JSON manifest line on stderr.
//!
//! Exit codes: 0 success, 1 IO or file-format error, 2 configuration or
//! validation error (including flag parsing).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::data::{self, FeatureLogitDataset, OodKind, SyntheticSpec};
use crate::error::{Error, Result};
use crate::experiments::{self, Benchmark, BenchmarkConfig, OodSet, SweepAxis};
use crate::linalg::NormOrder;
use crate::losses::Temperature;
use crate::mahalanobis::{MahalanobisEstimator, DEFAULT_LAMBDA};
use crate::metrics::EvalReport;
use crate::nn::{MlpModel, ParamSelection};
use crate::scores::{score_dataset, ScoreConfig, ScoreData, ScoreMethod};
use crate::train::{self, TrainConfig};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "gradnorm-ood",
    version,
    about = "Gradient-norm OOD scoring, baselines and evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic ID train/test and OOD test sets as FLOG files.
    Gen(GenArgs),
    /// Train an MLP on a labelled FLOG file.
    Train(TrainArgs),
    /// Write penultimate features and logits of a model over raw inputs.
    Extract(ExtractArgs),
    /// Score every sample of a dataset.
    Score(ScoreCmdArgs),
    /// FPR95 / AUROC from an ID and an OOD score file.
    Eval(EvalArgs),
    /// Ablation sweep over norm, temperature, selection or method.
    Sweep(SweepArgs),
    /// GradNorm over a 2-D input grid.
    Surface(SurfaceArgs),
    /// Fit and save a Mahalanobis estimator.
    MahaFit(MahaFitArgs),
    /// Run the pinned desk-scale benchmark end to end.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 500)]
    pub samples_per_class: usize,
    #[arg(long, default_value_t = 4.0)]
    pub center_scale: f64,
    #[arg(long, default_value_t = 0.9)]
    pub sigma: f64,
    /// ring | uniform-box
    #[arg(long, default_value = "ring")]
    pub ood_kind: String,
    #[arg(long, default_value_t = 0.6)]
    pub ood_shift: f64,
    /// 0 = same count as the ID test split.
    #[arg(long, default_value_t = 0)]
    pub ood_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Hidden widths, comma separated (empty for a single linear layer).
    #[arg(long, default_value = "32", value_delimiter = ',')]
    pub hidden: Vec<String>,
    /// Class count; defaults to max label + 1.
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.05)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lr_decay: f64,
    #[arg(long, value_delimiter = ',')]
    pub decay_epochs: Vec<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub model_seed: u64,
    /// Optional per-epoch CSV log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct ScoreArgs {
    /// gradnorm|gradnorm-closed|onehot|kl|u|v|msp|odin|energy|mahalanobis
    #[arg(long, default_value = "gradnorm")]
    pub method: String,
    /// p of the Lp norm: 0.3, 0.5, 1, 2, ..., inf
    #[arg(long, default_value = "1")]
    pub norm: String,
    /// Softmax temperature (default 1; 1000 for odin).
    #[arg(long)]
    pub temperature: Option<f64>,
    /// last | layer:K | all
    #[arg(long, default_value = "last")]
    pub selection: String,
    /// ODIN input perturbation.
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
}

impl ScoreArgs {
    pub fn to_config(&self) -> Result<ScoreConfig> {
        let method: ScoreMethod = self.method.parse()?;
        let default_t = if method == ScoreMethod::Odin {
            1000.0
        } else {
            1.0
        };
        let cfg = ScoreConfig {
            method,
            temperature: Temperature::new(self.temperature.unwrap_or(default_t))?,
            norm: self.norm.parse::<NormOrder>()?,
            selection: self.selection.parse::<ParamSelection>()?,
            epsilon: self.epsilon,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
pub struct ScoreCmdArgs {
    /// Raw inputs (with --model) or extracted features/logits.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[command(flatten)]
    pub score: ScoreArgs,
    /// Saved MAHA estimator for --method mahalanobis.
    #[arg(long)]
    pub estimator: Option<PathBuf>,
    /// Labelled data to fit the Mahalanobis estimator on (same form as --data).
    #[arg(long)]
    pub fit_on: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub id: PathBuf,
    #[arg(long)]
    pub ood: PathBuf,
    #[arg(long, default_value = "scores")]
    pub method: String,
    /// Also write the report as JSON.
    #[arg(long)]
    pub json: Option<PathBuf>,
    /// Also write the text report to a file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// ID raw-input FLOG file.
    #[arg(long)]
    pub id: PathBuf,
    /// OOD raw-input FLOG file, optionally `name=path`; repeatable.
    #[arg(long, required = true)]
    pub ood: Vec<String>,
    /// norm | temperature | selection | method
    #[arg(long)]
    pub axis: String,
    /// Comma-separated values; defaults to the standard grid for the axis.
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<String>,
    #[command(flatten)]
    pub score: ScoreArgs,
    /// Labelled raw inputs for fitting Mahalanobis when it appears in a method sweep.
    #[arg(long)]
    pub fit_on: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SurfaceArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// lo hi steps
    #[arg(long, num_args = 3, value_names = ["LO", "HI", "STEPS"], allow_negative_numbers = true)]
    pub grid: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MahaFitArgs {
    /// Labelled data: raw inputs with --model, otherwise extracted features.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Describes how one written file was produced.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub output: String,
    pub version: &'a str,
}

struct Reporter<'a> {
    command: &'a str,
    config: serde_json::Value,
    seed: Option<u64>,
    inputs: Vec<String>,
}

impl Reporter<'_> {
    fn wrote(&self, path: &Path) {
        let m = RunManifest {
            command: self.command,
            config: self.config.clone(),
            seed: self.seed,
            inputs: self.inputs.clone(),
            output: path.display().to_string(),
            version: VERSION,
        };
        eprintln!(
            "{}",
            serde_json::to_string(&m).expect("manifest serializes")
        );
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text)?;
    Ok(())
}

fn score_config_json(cfg: &ScoreConfig) -> serde_json::Value {
    json!({
        "method": cfg.method.name(),
        "temperature": cfg.temperature.get(),
        "norm": cfg.norm.to_string(),
        "selection": cfg.selection.to_string(),
        "epsilon": cfg.epsilon,
    })
}

/// Parses flags and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Extract(a) => cmd_extract(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Surface(a) => cmd_surface(&a),
        Command::MahaFit(a) => cmd_maha_fit(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let spec = SyntheticSpec {
        ood_kind: a.ood_kind.parse::<OodKind>()?,
        dim: a.dim,
        classes: a.classes,
        samples_per_class: a.samples_per_class,
        class_center_scale: a.center_scale,
        noise_sigma: a.sigma,
        ood_shift: a.ood_shift,
        ood_samples: a.ood_samples,
        seed: a.seed,
    };
    let split = data::generate(&spec)?;
    std::fs::create_dir_all(&a.out)?;
    let rep = Reporter {
        command: "gen",
        config: serde_json::to_value(&spec).expect("spec serializes"),
        seed: Some(a.seed),
        inputs: vec![],
    };
    for (name, ds) in [
        ("id_train.flog", &split.id_train),
        ("id_test.flog", &split.id_test),
        ("ood_test.flog", &split.ood_test),
    ] {
        let path = a.out.join(name);
        data::write_flog(&path, ds)?;
        rep.wrote(&path);
    }
    let spec_path = a.out.join("spec.json");
    write_text(
        &spec_path,
        &(serde_json::to_string_pretty(&spec).expect("spec serializes") + "\n"),
    )?;
    rep.wrote(&spec_path);
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let data = data::read_flog(&a.data)?;
    let labels = data
        .labels()
        .ok_or_else(|| Error::config("data", "training file has no labels"))?;
    let classes = match a.classes {
        Some(c) => c,
        None => labels.iter().copied().max().map_or(0, |m| m as usize + 1),
    };
    if classes < 2 {
        return Err(Error::config(
            "classes",
            format!("need >= 2 classes, got {classes}"),
        ));
    }
    let mut hidden = Vec::new();
    for h in a.hidden.iter().filter(|h| !h.trim().is_empty()) {
        hidden.push(
            h.trim()
                .parse::<usize>()
                .map_err(|_| Error::config("hidden", format!("cannot parse {h:?}")))?,
        );
    }
    let dims: Vec<usize> = std::iter::once(data.feature_dim())
        .chain(hidden.iter().copied())
        .chain(std::iter::once(classes))
        .collect();
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        lr_decay_factor: a.lr_decay,
        decay_epochs: a.decay_epochs.clone(),
        seed: a.seed,
    };
    let mut model = MlpModel::init(&dims, a.model_seed)?;
    let log = train::train(&mut model, &data, &cfg)?;
    model.save(&a.out)?;
    let rep = Reporter {
        command: "train",
        config: json!({ "dims": dims, "train": cfg, "model_seed": a.model_seed }),
        seed: Some(a.seed),
        inputs: vec![path_str(&a.data)],
    };
    rep.wrote(&a.out);
    if let Some(log_path) = &a.log {
        let mut csv = String::from("epoch,loss,accuracy,lr\n");
        for e in &log.epochs {
            csv.push_str(&format!("{},{},{},{}\n", e.epoch, e.loss, e.accuracy, e.lr));
        }
        write_text(log_path, &csv)?;
        rep.wrote(log_path);
    }
    if let Some(last) = log.last() {
        println!(
            "epochs={} loss={} train_accuracy={}",
            log.epochs.len(),
            last.loss,
            last.accuracy
        );
    }
    Ok(())
}

pub fn cmd_extract(a: &ExtractArgs) -> Result<()> {
    let model = MlpModel::load(&a.model)?;
    let inputs = data::read_flog(&a.data)?;
    let ex = train::extract(&model, &inputs)?;
    data::write_flog(&a.out, &ex)?;
    Reporter {
        command: "extract",
        config: json!({}),
        seed: None,
        inputs: vec![path_str(&a.model), path_str(&a.data)],
    }
    .wrote(&a.out);
    Ok(())
}

fn load_estimator(
    model: Option<&MlpModel>,
    estimator: Option<&Path>,
    fit_on: Option<&Path>,
    lambda: f64,
) -> Result<Option<MahalanobisEstimator>> {
    if let Some(p) = estimator {
        return Ok(Some(MahalanobisEstimator::load(p)?));
    }
    let Some(p) = fit_on else {
        return Ok(None);
    };
    let ds = data::read_flog(p)?;
    Ok(Some(fit_estimator(model, &ds, lambda)?))
}

fn fit_estimator(
    model: Option<&MlpModel>,
    ds: &FeatureLogitDataset,
    lambda: f64,
) -> Result<MahalanobisEstimator> {
    match model {
        Some(m) => experiments::fit_mahalanobis(m, ds, lambda),
        None => {
            let labels = ds
                .labels()
                .ok_or_else(|| Error::config("fit-on", "Mahalanobis fit needs labels"))?;
            let features = ds
                .features()
                .ok_or_else(|| Error::config("fit-on", "Mahalanobis fit needs features"))?;
            let classes = if ds.num_classes() > 0 {
                ds.num_classes()
            } else {
                labels.iter().copied().max().map_or(0, |m| m as usize + 1)
            };
            MahalanobisEstimator::fit(features, ds.feature_dim(), labels, classes, lambda)
        }
    }
}

pub fn cmd_score(a: &ScoreCmdArgs) -> Result<()> {
    let cfg = a.score.to_config()?;
    let ds = data::read_flog(&a.data)?;
    let model = a.model.as_ref().map(MlpModel::load).transpose()?;
    let estimator = if cfg.method == ScoreMethod::Mahalanobis {
        let est = load_estimator(
            model.as_ref(),
            a.estimator.as_deref(),
            a.fit_on.as_deref(),
            a.lambda,
        )?;
        if est.is_none() {
            return Err(Error::config(
                "estimator",
                "--method mahalanobis needs --estimator FILE or --fit-on FILE",
            ));
        }
        est
    } else {
        None
    };
    let form = match &model {
        Some(m) => ScoreData::Model {
            model: m,
            inputs: &ds,
        },
        None => ScoreData::Extracted(&ds),
    };
    let scores = score_dataset(form, &cfg, estimator.as_ref())?;
    experiments::write_scores(&a.out, &scores)?;
    let mut inputs = vec![path_str(&a.data)];
    inputs.extend(a.model.as_deref().map(path_str));
    Reporter {
        command: "score",
        config: score_config_json(&cfg),
        seed: None,
        inputs,
    }
    .wrote(&a.out);
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let id = experiments::read_scores(&a.id)?;
    let ood = experiments::read_scores(&a.ood)?;
    let report = EvalReport::evaluate(&a.method, &id, &ood)?;
    let text = report.to_text();
    print!("{text}");
    let rep = Reporter {
        command: "eval",
        config: json!({ "method": a.method }),
        seed: None,
        inputs: vec![path_str(&a.id), path_str(&a.ood)],
    };
    if let Some(p) = &a.out {
        write_text(p, &text)?;
        rep.wrote(p);
    }
    if let Some(p) = &a.json {
        write_text(p, &(report.to_json() + "\n"))?;
        rep.wrote(p);
    }
    Ok(())
}

fn parse_ood_arg(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => (name.to_string(), PathBuf::from(path)),
        _ => {
            let p = PathBuf::from(s);
            let name = p
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| s.to_string());
            (name, p)
        }
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let axis: SweepAxis = a.axis.parse()?;
    let base = a.score.to_config()?;
    let model = MlpModel::load(&a.model)?;
    let id = data::read_flog(&a.id)?;
    let mut named = Vec::new();
    for o in &a.ood {
        let (name, path) = parse_ood_arg(o);
        named.push((name, data::read_flog(&path)?));
    }
    let values = if a.values.is_empty() {
        axis.default_values(model.layers().len())
    } else {
        a.values.clone()
    };
    let needs_estimator = base.method == ScoreMethod::Mahalanobis
        || (axis == SweepAxis::Method && values.iter().any(|v| v == "mahalanobis"));
    let estimator = match (&a.fit_on, needs_estimator) {
        (Some(p), true) => Some(experiments::fit_mahalanobis(
            &model,
            &data::read_flog(p)?,
            DEFAULT_LAMBDA,
        )?),
        (None, true) => {
            return Err(Error::config(
                "fit-on",
                "a Mahalanobis sweep needs --fit-on FILE",
            ));
        }
        _ => None,
    };
    let oods: Vec<OodSet<'_>> = named
        .iter()
        .map(|(name, ds)| OodSet {
            name: name.clone(),
            data: ds,
        })
        .collect();
    let rows =
        experiments::run_sweep(&model, &id, &oods, &base, axis, &values, estimator.as_ref())?;
    write_text(&a.out, &experiments::sweep_csv(&rows))?;
    let mut inputs = vec![path_str(&a.model), path_str(&a.id)];
    inputs.extend(a.ood.iter().cloned());
    Reporter {
        command: "sweep",
        config: json!({ "axis": axis.name(), "values": values, "base": score_config_json(&base) }),
        seed: None,
        inputs,
    }
    .wrote(&a.out);
    Ok(())
}

pub fn cmd_surface(a: &SurfaceArgs) -> Result<()> {
    let [lo, hi, steps] = a.grid.as_slice() else {
        return Err(Error::config("grid", "expected LO HI STEPS"));
    };
    let lo: f64 = lo
        .parse()
        .map_err(|_| Error::config("grid", format!("bad LO {lo:?}")))?;
    let hi: f64 = hi
        .parse()
        .map_err(|_| Error::config("grid", format!("bad HI {hi:?}")))?;
    let steps: usize = steps
        .parse()
        .map_err(|_| Error::config("grid", format!("bad STEPS {steps:?}")))?;
    let model = MlpModel::load(&a.model)?;
    let pts = experiments::gradnorm_surface(&model, lo, hi, steps)?;
    write_text(&a.out, &experiments::surface_csv(&pts))?;
    Reporter {
        command: "surface",
        config: json!({ "lo": lo, "hi": hi, "steps": steps }),
        seed: None,
        inputs: vec![path_str(&a.model)],
    }
    .wrote(&a.out);
    Ok(())
}

pub fn cmd_maha_fit(a: &MahaFitArgs) -> Result<()> {
    let ds = data::read_flog(&a.data)?;
    let model = a.model.as_ref().map(MlpModel::load).transpose()?;
    let est = fit_estimator(model.as_ref(), &ds, a.lambda)?;
    est.save(&a.out)?;
    Reporter {
        command: "maha-fit",
        config: json!({ "lambda": a.lambda }),
        seed: None,
        inputs: vec![path_str(&a.data)],
    }
    .wrote(&a.out);
    Ok(())
}

/// Methods reported by `bench`, in output order.
pub const BENCH_METHODS: [&str; 10] = [
    "gradnorm",
    "gradnorm-closed",
    "onehot",
    "kl",
    "u",
    "v",
    "msp",
    "odin",
    "energy",
    "mahalanobis",
];

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let bench = Benchmark::run(BenchmarkConfig::default())?;
    let written = write_benchmark(&bench, &a.out)?;
    let rep = Reporter {
        command: "bench",
        config: json!({
            "data": bench.config.data,
            "dims": bench.config.dims(),
            "train": bench.config.train,
        }),
        seed: Some(bench.config.data.seed),
        inputs: vec![],
    };
    for p in &written.files {
        rep.wrote(p);
    }
    print!("{}", written.summary);
    Ok(())
}

/// Files written by [`write_benchmark`] and the one-line-per-method summary.
#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Writes the benchmark's data, model, per-method scores and reports, and
/// the four ablation sweeps into `out`.
pub fn write_benchmark(bench: &Benchmark, out: &Path) -> Result<BenchmarkOutput> {
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    for (name, ds) in [
        ("id_train.flog", &bench.split.id_train),
        ("id_test.flog", &bench.split.id_test),
        ("ood_test.flog", &bench.split.ood_test),
    ] {
        let p = out.join(name);
        data::write_flog(&p, ds)?;
        files.push(p);
    }
    let model_path = out.join("model.mlp1");
    bench.model.save(&model_path)?;
    files.push(model_path);

    let estimator = bench.mahalanobis()?;
    let est_path = out.join("mahalanobis.maha");
    estimator.save(&est_path)?;
    files.push(est_path);

    let mut summary = format!("train_accuracy={}\n", bench.train_accuracy);
    for name in BENCH_METHODS {
        let args = ScoreArgs {
            method: name.to_string(),
            norm: "1".into(),
            temperature: None,
            selection: "last".into(),
            epsilon: 0.0,
        };
        let cfg = args.to_config()?;
        let id = bench.scores(&cfg, &bench.split.id_test, Some(&estimator))?;
        let ood = bench.scores(&cfg, &bench.split.ood_test, Some(&estimator))?;
        for (suffix, scores) in [("id", &id), ("ood", &ood)] {
            let p = out.join(format!("scores_{name}_{suffix}.txt"));
            experiments::write_scores(&p, scores)?;
            files.push(p);
        }
        let report = EvalReport::evaluate(name, &id, &ood)?;
        let p = out.join(format!("eval_{name}.json"));
        write_text(&p, &(report.to_json() + "\n"))?;
        files.push(p);
        summary.push_str(report.to_text().lines().next().unwrap_or_default());
        summary.push('\n');
    }
    let p = out.join("eval_summary.txt");
    write_text(&p, &summary)?;
    files.push(p);

    let base = ScoreConfig::new(ScoreMethod::GradNorm);
    for axis in [
        SweepAxis::Norm,
        SweepAxis::Temperature,
        SweepAxis::Selection,
        SweepAxis::Method,
    ] {
        let values = axis.default_values(bench.model.layers().len());
        let rows = bench.sweep(&base, axis, &values)?;
        let p = out.join(format!("sweep_{}.csv", axis.name()));
        write_text(&p, &experiments::sweep_csv(&rows))?;
        files.push(p);
    }
    Ok(BenchmarkOutput { files, summary })
}
