//! The `workzone` command line: corpus generation, training, prediction,
//! evaluation, rendering, feed ingestion and gradient checks.

pub mod artifact;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use anyhow::anyhow;
use clap::{ArgGroup, Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

pub use artifact::{BaselineArtifact, BaselineModel, LoadedModel, PredictionFile};
pub use config::{BaselineConfig, CorpusConfig, RunConfig, TOOL_SCHEMA_VERSION};
pub use error::{CmdResult, Failure, FailureKind};

use artifact::{provenance, read_bytes, read_json, read_scenario, write_bytes, write_json};
use workzone_core::eval::{evaluate, EvalReport, Evaluation};
use workzone_core::ingest::{match_and_bin, parse_events, parse_incidents, parse_links, parse_speeds};
use workzone_core::model::{
    model_gradcheck, HistoricalAverage, LinearAr, ModelConfig, ModelGradcheck, PredictionOutput, Predictor,
    MODEL_GRADCHECK_TOLERANCE,
};
use workzone_core::numerics::{GradCheckReport, NumericWidth, FD_STEP};
use workzone_core::scenario::{generate_corpus, read_corpus, write_corpus, Corpus, Split};
use workzone_core::spacetime::{build_sample, build_samples, render_heatmap, Sample};
use workzone_core::train::{save_checkpoint, train, Checkpoint, TrainingHistory};

#[derive(Debug, Parser)]
#[command(name = "workzone", version, about = "Work-zone traffic impact prediction pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scenario corpus.
    Generate(GenerateArgs),
    /// Train the network, or fit a baseline with --baseline.
    Train(TrainArgs),
    /// Predict one scenario.
    Predict(PredictArgs),
    /// Score a model on a corpus split.
    Evaluate(EvaluateArgs),
    /// Render one channel of a scenario or prediction as a PPM heatmap.
    Render(RenderArgs),
    /// Build a corpus from a work-zone feed, link table and speed readings.
    Ingest(IngestArgs),
    /// Finite-difference check of the training gradient.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Hist,
    Ar,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    /// Checkpoint path, or baseline JSON path with --baseline.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, conflicts_with = "baseline")]
    pub no_attention: bool,
    #[arg(long, value_enum)]
    pub baseline: Option<BaselineKind>,
    /// Overrides training.seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides training.max_epochs.
    #[arg(long)]
    pub max_epochs: Option<usize>,
    /// Omit wall-clock timings from the history so reruns are byte-identical.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// A scenario JSON file.
    #[arg(long)]
    pub scenario: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Baselines: `hist`, `ar` (fitted on the train split) or model paths.
    #[arg(long, num_args = 1..)]
    pub compare: Vec<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["scenario", "prediction"])))]
pub struct RenderArgs {
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub prediction: Option<PathBuf>,
    /// An input channel name or `actual_speed` for scenarios;
    /// `predicted_speed` for predictions.
    #[arg(long)]
    pub channel: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub events: PathBuf,
    #[arg(long)]
    pub links: PathBuf,
    #[arg(long)]
    pub speeds: PathBuf,
    #[arg(long)]
    pub incidents: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Split seed; defaults to corpus.seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Check on an 8x8 canvas, every coordinate.
    #[arg(long)]
    pub reduced_canvas: bool,
    /// Perturb one analytic gradient block; the check must then fail.
    #[arg(long)]
    pub inject_fault: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Coordinates checked per tensor; defaults to all on the reduced
    /// canvas and 16 on the full canvas.
    #[arg(long)]
    pub per_block: Option<usize>,
    /// Central-difference step.
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Coordinates per tensor for a full-canvas check.
pub const FULL_CANVAS_PER_BLOCK: usize = 16;

pub fn run(cli: Cli) -> CmdResult<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a).map(|_| ()),
        Command::Render(a) => cmd_render(&a),
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Gradcheck(a) => cmd_gradcheck(&a).map(|_| ()),
    }
}

fn stamp_corpus(corpus: &mut Corpus, config: &RunConfig) {
    corpus.manifest.provenance = Some(provenance(config));
}

pub fn cmd_generate(args: &GenerateArgs) -> CmdResult<()> {
    let mut config = RunConfig::resolve(args.config.as_deref(), None)?;
    if let Some(c) = args.count {
        config.corpus.count = c;
    }
    if let Some(s) = args.seed {
        config.corpus.seed = s;
    }
    let mut corpus = generate_corpus(config.corpus.count, config.corpus.seed, &config.scenario)?;
    stamp_corpus(&mut corpus, &config);
    write_corpus(&args.out, &corpus)?;
    let c = &corpus.manifest.counts;
    println!(
        "wrote {} scenarios to {} (train {}, val {}, test {})",
        corpus.records.len(),
        args.out.display(),
        c.train,
        c.val,
        c.test
    );
    Ok(())
}

fn load_split(corpus: &Corpus, split: Split, config: &RunConfig) -> CmdResult<Vec<Sample>> {
    Ok(build_samples(corpus.split(split), &config.spacetime)?)
}

/// History JSON path beside a checkpoint: `model.ckpt` -> `model.history.json`.
pub fn history_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("history.json")
}

fn fit_baseline(kind: BaselineKind, train: &[Sample], config: &RunConfig) -> CmdResult<BaselineModel> {
    let refs: Vec<&Sample> = train.iter().collect();
    Ok(match kind {
        BaselineKind::Hist => BaselineModel::HistoricalAverage(HistoricalAverage::fit(&refs)?),
        BaselineKind::Ar => BaselineModel::LinearAr(LinearAr::fit(
            &refs,
            config.baseline.ar_lookback,
            config.baseline.ar_ridge,
            config.spacetime.speed_max,
        )?),
    })
}

pub fn cmd_train(args: &TrainArgs) -> CmdResult<()> {
    let mut config = RunConfig::resolve(args.config.as_deref(), None)?;
    if args.no_attention {
        config.model.attention_enabled = false;
    }
    if let Some(s) = args.seed {
        config.training.seed = s;
    }
    if let Some(m) = args.max_epochs {
        config.training.max_epochs = m;
    }
    config.validate()?;
    let corpus = read_corpus(&args.corpus)?;
    let train_set = load_split(&corpus, Split::Train, &config)?;
    if let Some(kind) = args.baseline {
        let baseline = fit_baseline(kind, &train_set, &config)?;
        let artifact = BaselineArtifact { schema_version: TOOL_SCHEMA_VERSION, baseline, config };
        write_json(&args.out, &artifact)?;
        println!("wrote {} baseline to {}", artifact.baseline.predictor().name(), args.out.display());
        return Ok(());
    }
    let val_set = load_split(&corpus, Split::Val, &config)?;
    let train_refs: Vec<&Sample> = train_set.iter().collect();
    let val_refs: Vec<&Sample> = val_set.iter().collect();
    let speed_max = config.spacetime.speed_max;
    let (params, history) = match config.training.width {
        NumericWidth::F32 => train::<f32>(&config.model, &train_refs, &val_refs, &config.training, speed_max)?,
        NumericWidth::F64 => {
            let (p, h) = train::<f64>(&config.model, &train_refs, &val_refs, &config.training, speed_max)?;
            (p.cast::<f32>(), h)
        }
    };
    let extra = json!({
        "schema_version": TOOL_SCHEMA_VERSION,
        "config": config,
        "best_epoch": history.best_epoch,
        "best_val_loss": history.best_val_loss,
        "stop_epoch": history.stop_epoch,
        "stop_reason": history.stop_reason,
    });
    let ck = Checkpoint::new(params, speed_max, Some(config.training.clone()), extra);
    save_checkpoint(&args.out, &ck)?;
    let history: TrainingHistory = if args.strict { history.without_timing() } else { history };
    let path = history_path(&args.out);
    write_json(&path, &json!({ "schema_version": TOOL_SCHEMA_VERSION, "config": config, "history": history }))?;
    println!(
        "trained {} epochs (best {} val loss {:.4}); wrote {} and {}",
        history.stop_epoch,
        history.best_epoch,
        history.best_val_loss,
        args.out.display(),
        path.display()
    );
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> CmdResult<()> {
    let model = LoadedModel::load(&args.model)?;
    let config = RunConfig::resolve(args.config.as_deref(), model.embedded_config())?;
    model.check_compatible(&config)?;
    let record = read_scenario(&args.scenario)?;
    let sample = build_sample(&record, &config.spacetime)?;
    let out = model.predictor().predict_sample(&sample)?;
    check_finite(&out)?;
    let file = PredictionFile::new(model.predictor().name(), &sample, &out, config.spacetime.speed_max, &config);
    write_json(&args.out, &file)?;
    println!("wrote prediction for {} to {} (p_incident {:.3})", sample.id, args.out.display(), file.p_incident);
    Ok(())
}

fn check_finite(out: &PredictionOutput) -> CmdResult<()> {
    if out.y_speed_hat.iter().chain(&out.p_incident).all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Failure::numeric(anyhow!("prediction contains non-finite values")))
    }
}

fn score(model: &dyn Predictor, samples: &[Sample], config: &RunConfig) -> CmdResult<Evaluation> {
    let outputs = model.predict_all(samples)?;
    outputs.iter().try_for_each(check_finite)?;
    let speeds: Vec<Vec<f64>> = outputs.iter().map(|o| o.y_speed_hat.clone()).collect();
    let probs: Vec<f64> = outputs.iter().map(|o| o.incident_probability()).collect();
    Ok(evaluate(samples, &speeds, &probs, config.spacetime.speed_max, &config.eval)?)
}

fn unique_name(base: String, taken: &[String]) -> String {
    if !taken.contains(&base) {
        return base;
    }
    (2..).map(|i| format!("{base}#{i}")).find(|n| !taken.contains(n)).unwrap_or(base)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> CmdResult<EvalReport> {
    let model = LoadedModel::load(&args.model)?;
    let config = RunConfig::resolve(args.config.as_deref(), model.embedded_config())?;
    model.check_compatible(&config)?;
    let corpus = read_corpus(&args.corpus)?;
    let split: Split = args.split.into();
    let samples = load_split(&corpus, split, &config)?;
    if samples.is_empty() {
        return Err(Failure::data(anyhow!("{split:?} split of {} is empty", args.corpus.display())));
    }
    let evaluation = score(model.predictor(), &samples, &config)?;
    let mut train_set: Option<Vec<Sample>> = None;
    let mut baselines: Vec<(String, Evaluation)> = Vec::new();
    for spec in &args.compare {
        let (name, eval) = match spec.as_str() {
            "hist" | "ar" => {
                if train_set.is_none() {
                    train_set = Some(load_split(&corpus, Split::Train, &config)?);
                }
                let kind = if spec == "hist" { BaselineKind::Hist } else { BaselineKind::Ar };
                let fitted = fit_baseline(kind, train_set.as_deref().unwrap_or_default(), &config)?;
                (fitted.predictor().name().to_string(), score(fitted.predictor(), &samples, &config)?)
            }
            path => {
                let path = Path::new(path);
                let other = LoadedModel::load(path)?;
                other.check_compatible(&config)?;
                let stem = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into());
                (stem, score(other.predictor(), &samples, &config)?)
            }
        };
        let taken: Vec<String> = baselines.iter().map(|(n, _)| n.clone()).collect();
        baselines.push((unique_name(name, &taken), eval));
    }
    let split_name = serde_json::to_value(split).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let report = EvalReport::new(model.predictor().name(), &split_name, &evaluation, &baselines, provenance(&config));
    if let Some(path) = &args.report {
        write_json(path, &report)?;
    }
    print!("{}", report.table());
    Ok(report)
}

/// Sidecar metadata beside a rendered image: `img.ppm` -> `img.json`.
pub fn render_sidecar_path(image: &Path) -> PathBuf {
    image.with_extension("json")
}

pub fn cmd_render(args: &RenderArgs) -> CmdResult<()> {
    let (values, mask, height, width, source, config) = if let Some(path) = &args.scenario {
        let config = RunConfig::resolve(args.config.as_deref(), None)?;
        let record = read_scenario(path)?;
        let sample = build_sample(&record, &config.spacetime)?;
        let values = if args.channel == "actual_speed" {
            sample.y_speed.clone()
        } else {
            let idx = sample.x_image.channel_index(&args.channel).ok_or_else(|| {
                Failure::usage(anyhow!(
                    "unknown channel `{}`; available: {}, actual_speed",
                    args.channel,
                    sample.x_image.channel_names.join(", ")
                ))
            })?;
            sample.x_image.channel(idx)
        };
        (values, sample.mask.clone(), sample.height(), sample.width(), path, config)
    } else {
        let path = args.prediction.as_ref().ok_or_else(|| Failure::usage(anyhow!("--scenario or --prediction")))?;
        let file: PredictionFile = read_json(path)?;
        if args.channel != "predicted_speed" {
            return Err(Failure::usage(anyhow!(
                "unknown channel `{}` for a prediction; available: predicted_speed",
                args.channel
            )));
        }
        let config = match &args.config {
            Some(p) => RunConfig::load(p)?,
            None => file
                .config
                .get("config")
                .and_then(|v| serde_json::from_value(v.clone()).ok())
                .unwrap_or_default(),
        };
        let (h, w) = (file.height, file.width);
        if file.y_speed_mph.len() != h || file.y_speed_mph.iter().any(|r| r.len() != w) {
            return Err(Failure::data(anyhow!("{}: speed grid is not {h}x{w}", path.display())));
        }
        let cells = file.y_speed_mph.iter().flatten();
        let values: Vec<f64> = cells.clone().map(|v| v.map_or(0.0, |x| (x / file.speed_max).clamp(0.0, 1.0))).collect();
        let mask: Vec<f64> = cells.map(|v| v.is_some() as u8 as f64).collect();
        (values, mask, h, w, path, config)
    };
    let image = render_heatmap(&values, &mask, height, width)?;
    write_bytes(&args.out, &image.bytes)?;
    let sidecar = render_sidecar_path(&args.out);
    write_json(
        &sidecar,
        &json!({
            "schema_version": TOOL_SCHEMA_VERSION,
            "source": source.display().to_string(),
            "channel": args.channel,
            "height": height,
            "width": width,
            "config": config,
        }),
    )?;
    println!("wrote {}x{} heatmap to {}", width, height, args.out.display());
    Ok(())
}

pub fn cmd_ingest(args: &IngestArgs) -> CmdResult<()> {
    let config = RunConfig::resolve(args.config.as_deref(), None)?;
    let events = parse_events(&read_bytes(&args.events)?)?;
    let links = parse_links(&read_bytes(&args.links)?)?;
    let speeds = parse_speeds(&read_bytes(&args.speeds)?)?;
    let incidents = match &args.incidents {
        Some(p) => parse_incidents(&read_bytes(p)?)?,
        None => Default::default(),
    };
    let out = match_and_bin(&events.rows, &links.rows, &speeds.rows, &incidents, &config.ingest);
    let skipped: Vec<_> =
        events.skipped.iter().chain(&links.skipped).chain(&speeds.skipped).chain(&out.skipped).cloned().collect();
    let count = out.records.len();
    let mut corpus = Corpus::from_records(out.records, args.seed.unwrap_or(config.corpus.seed), &config.scenario);
    stamp_corpus(&mut corpus, &config);
    write_corpus(&args.out, &corpus)?;
    let log_path = args.out.join("skipped.json");
    write_json(
        &log_path,
        &json!({
            "schema_version": TOOL_SCHEMA_VERSION,
            "skipped": skipped,
            "clamped_cells": out.clamped_cells,
            "config": config,
        }),
    )?;
    println!(
        "ingested {count} scenarios into {} ({} skipped, {} cells clamped)",
        args.out.display(),
        skipped.len(),
        out.clamped_cells
    );
    Ok(())
}

pub fn cmd_gradcheck(args: &GradcheckArgs) -> CmdResult<GradCheckReport> {
    let config = RunConfig::resolve(args.config.as_deref(), None)?;
    let model = if args.reduced_canvas {
        ModelConfig { height: 8, width: 8, ..config.model.clone() }
    } else {
        config.model.clone()
    };
    let per_block = args.per_block.or((!args.reduced_canvas).then_some(FULL_CANVAS_PER_BLOCK));
    let objective = config.training.objective(config.spacetime.speed_max);
    let opts = ModelGradcheck {
        seed: args.seed,
        tolerance: MODEL_GRADCHECK_TOLERANCE,
        inject_fault: args.inject_fault,
        per_block,
        step: args.step.unwrap_or(FD_STEP),
    };
    let report = model_gradcheck(&model, &objective, &opts)?;
    print!("{report}");
    if let Some(path) = &args.report {
        write_json(path, &json!({ "schema_version": TOOL_SCHEMA_VERSION, "config": config, "report": report }))?;
    }
    if !report.passed {
        return Err(Failure::numeric(anyhow!(
            "gradient check failed; worst block {}",
            report.worst_block.as_deref().unwrap_or("?")
        )));
    }
    Ok(report)
}

/// Reads the bytes of a file; exposed for tests comparing artifacts.
pub fn file_bytes(path: &Path) -> CmdResult<Vec<u8>> {
    read_bytes(path)
}
