mod commands;
mod config;
mod experiment;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use errsup::negatives::ErrorType;
use errsup::training::SelectMetric;

use crate::commands::run;

#[derive(Debug, Parser)]
#[command(name = "errsup", version, about = "Train generators that suppress repeating and dropping errors")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Experiment configuration (JSON). Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the experiment.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment directory; every output goes below it.
    #[arg(long, global = true, default_value = "experiment")]
    pub out: PathBuf,
    /// Beam width for decoding; 1 is greedy.
    #[arg(long, global = true)]
    pub beam: Option<usize>,
    /// Output length limit (default 2 * source length + 5).
    #[arg(long, global = true)]
    pub max_len: Option<usize>,
    /// Weight of the MLE term in the mixed RL loss, in (0, 1].
    #[arg(long, global = true)]
    pub lambda_mixed: Option<f64>,
    /// Discriminator share of the RL reward: 1 is discriminator only, 0 is GLEU only.
    #[arg(long, global = true)]
    pub lambda_rl: Option<f64>,
    /// repeat or drop.
    #[arg(long, global = true, value_parser = parse_error_type)]
    pub error_type: Option<ErrorType>,
    /// Dev metric that picks the RL checkpoint: erep, drop or bleu.
    #[arg(long, global = true, value_parser = parse_select)]
    pub select_metric: Option<SelectMetric>,
}

fn parse_error_type(s: &str) -> Result<ErrorType, String> {
    s.parse().map_err(|e: errsup::negatives::NegativeError| e.to_string())
}

fn parse_select(s: &str) -> Result<SelectMetric, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a synthetic task and write train/dev splits with alignments.
    GenData,
    /// Corrupt every line of a target file with the chosen error type.
    Corrupt {
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the generator by maximum likelihood.
    TrainMle,
    /// Train a discriminator on references and artificial negatives.
    TrainDisc,
    /// Fine-tune the MLE generator with policy gradients.
    TrainRl,
    /// Decode a source file with a trained generator.
    Decode {
        /// Row name (MLE, RL-D_REP, ...) or checkpoint path.
        #[arg(long, default_value = "MLE")]
        model: String,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Score a hypothesis file against references.
    Score {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        hypothesis: PathBuf,
        /// Source-reference alignment, enabling DROP.
        #[arg(long)]
        alignment: Option<PathBuf>,
        /// Name of the score files written under `scores/`.
        #[arg(long, default_value = "score")]
        name: String,
    },
    /// Paired bootstrap significance test between two hypothesis files.
    Compare {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        hyp_a: PathBuf,
        #[arg(long)]
        hyp_b: PathBuf,
        /// bleu, gleu, erep or rouge_l.
        #[arg(long, default_value = "bleu")]
        metric: String,
    },
    /// Decode the development split with every trained generator and
    /// write the results table.
    Report,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Ok(n) = std::env::var("ERRSUP_THREADS") {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                errsup::parallel::init_threads(n);
            }
            _ => {
                eprintln!("error: ERRSUP_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(1);
            }
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
