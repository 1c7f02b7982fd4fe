//! Command-line surface: `inject`, `train`, `score`, `eval`, `bench`.
//!
//! Configuration resolves in order: built-in defaults, then `--config`
//! file, then named flags, then repeated `--set key=value` overrides.
//! Every command writes the resolved configuration snapshot into its
//! output directory before doing any work.

pub mod commands;
mod config;

pub use commands::{cmd_bench, cmd_eval, cmd_inject, cmd_score, cmd_train, read_scores_csv};
pub use config::{RunConfig, ScoreSplit, SynthKind};

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::Result;

#[derive(Parser)]
#[command(
    name = "edad",
    about = "Encode-then-decompose time series anomaly detection",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Common {
    /// Configuration file of key=value lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed; drives init, shuffling, batching, and synthesis.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input CSV (one header row; a `label` column carries 0/1 marks).
    /// Without it, a synthetic series is generated.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Additional key=value overrides, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self, named: &[(&str, Option<String>)]) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.load_file(path)?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if let Some(out) = &self.out {
            cfg.set("out", &out.display().to_string())?;
        }
        if let Some(input) = &self.input {
            cfg.set("input", &input.display().to_string())?;
        }
        for (key, value) in named {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for pair in &self.set {
            let (k, v) = pair.split_once('=').ok_or_else(|| {
                crate::Error::Config(format!("--set expects key=value, got '{pair}'"))
            })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct InjectArgs {
    #[command(flatten)]
    common: Common,
    /// Anomaly kind: global, contextual, shapelet, seasonal, trend.
    #[arg(long)]
    kind: Option<String>,
    /// Fraction of points to corrupt.
    #[arg(long)]
    ratio: Option<f64>,
    /// Deviation scale in std units.
    #[arg(long)]
    magnitude: Option<f64>,
    /// Base synthetic signal when no input file is given: sine or flat.
    #[arg(long)]
    synth: Option<String>,
    /// Length of the synthetic base signal.
    #[arg(long)]
    n: Option<usize>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    ema_decay: Option<f64>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// infonce, nwj, mine, or jsd.
    #[arg(long)]
    estimator: Option<String>,
    /// separable, bilinear, or concatenated.
    #[arg(long)]
    critic: Option<String>,
    /// Use the log-form InfoNCE instead of the non-log default.
    #[arg(long)]
    standard_infonce: bool,
    /// Use conventional normalize(x + sublayer(x)) residuals.
    #[arg(long)]
    conventional_addnorm: bool,
    /// Leading fraction of rows used for training.
    #[arg(long)]
    split: Option<f64>,
    /// Contamination ratio applied to the training split.
    #[arg(long)]
    contaminate_ratio: Option<f64>,
}

#[derive(Args)]
struct ScoreArgs {
    #[command(flatten)]
    common: Common,
    /// Trained checkpoint to score with.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Anomaly ratio for thresholding.
    #[arg(long)]
    ratio: Option<f64>,
    /// Part of the series to score: train, test, or all.
    #[arg(long)]
    score_split: Option<String>,
    /// Also score the training split and pool it for the threshold.
    #[arg(long)]
    pool_train_scores: bool,
    /// Overlap/channel aggregation: mean or max.
    #[arg(long)]
    agg: Option<String>,
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// scores.csv produced by the score command.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// Apply point adjustment before computing P/R/F1.
    #[arg(long)]
    point_adjust: bool,
    /// Largest VUS buffer width (0 = window/2).
    #[arg(long)]
    vus_buffer: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: Common,
    /// Comma list of contamination ratios, e.g. 0.01,0.02,0.2.
    #[arg(long)]
    cr_grid: Option<String>,
    /// Comma list of estimators to sweep.
    #[arg(long)]
    estimators: Option<String>,
    /// Comma list of critics to sweep.
    #[arg(long)]
    critics: Option<String>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    heads: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    stride: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    inject_ratio: Option<f64>,
    #[arg(long)]
    inject_kind: Option<String>,
    #[arg(long)]
    split: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic-anomaly fixture CSV.
    Inject(InjectArgs),
    /// Train a model and write checkpoints plus the epoch log.
    Train(TrainArgs),
    /// Score a series with a trained checkpoint.
    Score(ScoreArgs),
    /// Compute the evaluation report for a score table.
    Eval(EvalArgs),
    /// Sweep contamination ratios and estimator/critic kinds.
    Bench(BenchArgs),
}

fn opt_str<T: ToString>(v: &Option<T>) -> Option<String> {
    v.as_ref().map(|x| x.to_string())
}

fn flag(on: bool) -> Option<String> {
    on.then(|| "true".to_string())
}

/// Parse argv and run. Returns an error (nonzero exit) if any step failed.
pub fn run<I, T>(argv: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::parse_from(argv);
    match cli.command {
        Command::Inject(args) => {
            let cfg = args.common.resolve(&[
                ("inject_kind", opt_str(&args.kind)),
                ("inject_ratio", opt_str(&args.ratio)),
                ("inject_magnitude", opt_str(&args.magnitude)),
                ("synth", opt_str(&args.synth)),
                ("synth_n", opt_str(&args.n)),
            ])?;
            let path = cmd_inject(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Train(args) => {
            let cfg = args.common.resolve(&[
                ("d", opt_str(&args.d)),
                ("layers", opt_str(&args.layers)),
                ("heads", opt_str(&args.heads)),
                ("window", opt_str(&args.window)),
                ("stride", opt_str(&args.stride)),
                ("lr", opt_str(&args.lr)),
                ("max_epochs", opt_str(&args.max_epochs)),
                ("patience", opt_str(&args.patience)),
                ("batch_size", opt_str(&args.batch_size)),
                ("ema_decay", opt_str(&args.ema_decay)),
                ("lambda1", opt_str(&args.lambda1)),
                ("lambda2", opt_str(&args.lambda2)),
                ("lambda3", opt_str(&args.lambda3)),
                ("estimator", opt_str(&args.estimator)),
                ("critic", opt_str(&args.critic)),
                ("standard_infonce", flag(args.standard_infonce)),
                ("conventional_addnorm", flag(args.conventional_addnorm)),
                ("split", opt_str(&args.split)),
                ("contaminate_ratio", opt_str(&args.contaminate_ratio)),
            ])?;
            let paths = cmd_train(&cfg)?;
            println!("wrote {}", paths.checkpoint.display());
            println!("wrote {}", paths.checkpoint_final.display());
            println!("wrote {}", paths.log.display());
        }
        Command::Score(args) => {
            let cfg = args.common.resolve(&[
                ("checkpoint", opt_str(&args.checkpoint.as_ref().map(|p| p.display()))),
                ("ratio", opt_str(&args.ratio)),
                ("score_split", opt_str(&args.score_split)),
                ("pool_train_scores", flag(args.pool_train_scores)),
                ("agg", opt_str(&args.agg)),
                ("split", opt_str(&args.split)),
            ])?;
            let path = cmd_score(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Eval(args) => {
            let cfg = args.common.resolve(&[
                ("scores", opt_str(&args.scores.as_ref().map(|p| p.display()))),
                ("point_adjust", flag(args.point_adjust)),
                ("vus_buffer", opt_str(&args.vus_buffer)),
            ])?;
            let (report, path) = cmd_eval(&cfg)?;
            print!("{}", report.to_text());
            println!("wrote {}", path.display());
        }
        Command::Bench(args) => {
            let cfg = args.common.resolve(&[
                ("cr_grid", opt_str(&args.cr_grid)),
                ("estimator_grid", opt_str(&args.estimators)),
                ("critic_grid", opt_str(&args.critics)),
                ("d", opt_str(&args.d)),
                ("layers", opt_str(&args.layers)),
                ("heads", opt_str(&args.heads)),
                ("window", opt_str(&args.window)),
                ("stride", opt_str(&args.stride)),
                ("max_epochs", opt_str(&args.max_epochs)),
                ("inject_ratio", opt_str(&args.inject_ratio)),
                ("inject_kind", opt_str(&args.inject_kind)),
                ("split", opt_str(&args.split)),
            ])?;
            let (cells, path) = cmd_bench(&cfg)?;
            println!("{} cells, wrote {}", cells.len(), path.display());
        }
    }
    Ok(())
}
