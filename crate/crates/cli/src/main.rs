//! `tkd`: synthetic data, training, evaluation and experiment sweeps.

mod commands;
mod files;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tkd", version, about = "Knowledge distillation between temporal knowledge graphs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Random seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic source/target pair with alignments.
    Synth(SynthArgs),
    /// Pretrain the teacher and distill into the target student.
    Train(TrainArgs),
    /// Rank test queries with a trained checkpoint.
    Eval(EvalArgs),
    /// Run a sweep: noise, pseudo-ratio or nce-decay.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    entities: usize,
    /// Target entity count; defaults to `--entities`.
    #[arg(long)]
    target_entities: Option<usize>,
    #[arg(long, default_value_t = 20)]
    relations: usize,
    #[arg(long, default_value_t = 40)]
    steps: u32,
    /// `train,val,test` step counts; defaults to a 70/10/20 split.
    #[arg(long)]
    split: Option<String>,
    #[arg(long, default_value_t = 60)]
    events_per_step: usize,
    #[arg(long, default_value_t = 0.6)]
    copy_prob: f64,
    /// Fraction of target entities with a disclosed alignment.
    #[arg(long, default_value_t = 0.1)]
    coverage: f64,
    /// Fraction of target training events kept.
    #[arg(long, default_value_t = 0.2)]
    target_ratio: f64,
    #[arg(long, default_value_t = 20)]
    clusters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Sizes that fit the synthetic benchmark on one core.
    Desk,
    /// The reference hyperparameters.
    Reference,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    source: PathBuf,
    #[arg(long)]
    target: PathBuf,
    #[arg(long)]
    align: PathBuf,
    /// `key = value` file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Preset::Desk)]
    preset: Preset,
    /// Ablation switch; repeatable.
    #[arg(long)]
    ablation: Vec<String>,
    #[arg(long, default_value = "28,4,8")]
    split: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint written by `train`; its directory holds the run files.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target quadruples used as history.
    #[arg(long)]
    target: PathBuf,
    /// Test quadruples; defaults to the test span of `--target`.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value = "28,4,8")]
    split: String,
    /// Also write per-step metrics as CSV.
    #[arg(long)]
    per_step: bool,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// One of noise, pseudo-ratio, nce-decay.
    name: String,
    #[arg(long, default_value = "0,0.1,0.2")]
    ratios: String,
    #[arg(long, default_value = "full,uniform_strength")]
    variants: String,
    #[arg(long, default_value = "0,0.1,0.2,0.3,0.4,0.5")]
    fractions: String,
    /// Skip the two single-model reference runs of pseudo-ratio.
    #[arg(long)]
    no_references: bool,
    /// Number of seeds, counted up from `--seed`.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Negative counts of nce-decay.
    #[arg(long = "N", default_value = "8,32,128,512")]
    negatives: String,
    /// `key = value` file applied over the desk preset.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = commands::init_threads(cli.common.threads).and_then(|()| match &cli.command {
        Command::Synth(a) => commands::synth(a, &cli.common),
        Command::Train(a) => commands::train(a, &cli.common),
        Command::Eval(a) => commands::eval(a, &cli.common),
        Command::Experiment(a) => commands::experiment(a, &cli.common),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
