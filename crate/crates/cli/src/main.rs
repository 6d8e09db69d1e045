//! `emocue`: extract cues, embed them, score explanation corpora, and run
//! the robustness and gradient-check experiments.
//!
//! Exit status: 0 success, 1 usage or configuration error, 2 data error,
//! 3 remote-service error.

mod commands;
mod config;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use emocue_core::harness::{PairMode, DEFAULT_PAIRS};

use crate::config::{GlobalArgs, RunConfig};
use crate::failure::Failure;

#[derive(Debug, Parser)]
#[command(name = "emocue", version, about = "Cue-level scoring for emotion explanations")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Identical,
    Overlapping,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fill missing cue blocks and write extracted.jsonl
    Extract {
        #[arg(long)]
        template_id: Option<String>,
    },
    /// Embed every cue of the corpus into the on-disk cache
    EmbedCache {
        #[arg(long)]
        template_id: Option<String>,
    },
    /// Score the corpus and write report.json and report.txt
    Score {
        /// Row label in the report [default: corpus file stem]
        #[arg(long)]
        label: Option<String>,
        #[arg(long)]
        template_id: Option<String>,
    },
    /// Score the corpus under five prompt templates and report the spread
    Sweep,
    /// Synthesize style-divergent pairs and compare metrics on them
    Synth {
        #[arg(long, default_value_t = DEFAULT_PAIRS)]
        pairs: usize,
        /// Cue pool JSON {"visual": [..], "audio": [..], "global": [..]}
        #[arg(long)]
        pool: Option<PathBuf>,
        /// Directory of style templates (*.txt)
        #[arg(long)]
        styles: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::Identical)]
        mode: ModeArg,
    },
    /// Check analytic loss gradients against central differences
    Losscheck {
        /// JSON {"anchors": [[..]], "targets": [[..]], "tau": ..}; random batches otherwise
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Average both contrastive directions
        #[arg(long)]
        symmetric: bool,
    },
    /// Render a comparison table from report.json files
    Report { inputs: Vec<PathBuf> },
}

fn run(cli: Cli) -> Result<(), Failure> {
    let cfg = RunConfig::resolve(cli.global)?;
    match cli.command {
        Command::Extract { template_id } => commands::extract(&cfg, template_id.as_deref()),
        Command::EmbedCache { template_id } => commands::embed_cache(&cfg, template_id.as_deref()),
        Command::Score { label, template_id } => commands::score(&cfg, label.as_deref(), template_id.as_deref()),
        Command::Sweep => commands::sweep(&cfg),
        Command::Synth {
            pairs,
            pool,
            styles,
            mode,
        } => commands::synth(
            &cfg,
            commands::SynthArgs {
                pairs,
                pool: pool.as_deref(),
                styles: styles.as_deref(),
                mode: match mode {
                    ModeArg::Identical => PairMode::Identical,
                    ModeArg::Overlapping => PairMode::Overlapping,
                },
            },
        ),
        Command::Losscheck {
            fixture,
            trials,
            step,
            tolerance,
            symmetric,
        } => commands::losscheck(
            &cfg,
            commands::LossCheckArgs {
                fixture: fixture.as_deref(),
                trials,
                step,
                tolerance,
                symmetric,
            },
        ),
        Command::Report { inputs } => commands::report(&inputs),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
