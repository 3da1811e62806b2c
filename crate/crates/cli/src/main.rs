use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use chatox_cli::{
    cmd_agreement_sample, cmd_agreement_score, cmd_analyze, cmd_benchmark, cmd_classify,
    cmd_ingest, cmd_prelabel, cmd_report, AnalyzeBy, CliError, RunConfig,
};

/// Batch analytics for live-stream chat toxicity: ingest chat dumps,
/// pre-label, classify through a chat-completion backend, and analyze.
#[derive(Parser)]
#[command(name = "chatox", version, about)]
struct Cli {
    /// Run configuration file.
    #[arg(short, long, global = true, default_value = "chatox.toml")]
    config: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse the chat dumps listed in a manifest into the normalized corpus.
    Ingest {
        /// Manifest file: one JSON entry per line with path/streamer/game.
        manifest: PathBuf,
    },
    /// Write allowlist/bot pre-labels to the store and emit allowlist
    /// candidates from the most frequent messages.
    Prelabel {
        /// How many top-frequency messages to list as candidates.
        #[arg(long, default_value_t = 50)]
        top: usize,
    },
    /// Run the two-stage zero-shot classification over the backend.
    Classify,
    /// Compute analyses over the labeled corpus.
    Analyze {
        /// Grouping for the analysis (omit for the overall analysis).
        #[arg(long, value_enum)]
        by: Option<ByArg>,
    },
    /// Agreement-study harness.
    Agreement {
        #[command(subcommand)]
        command: AgreementCommand,
    },
    /// Score the binary classifier against a labeled dataset
    /// (JSONL: {"text": ..., "gold": "toxic"|"nontoxic"}).
    Benchmark {
        dataset: PathBuf,
    },
    /// Render the consolidated human-readable report.
    Report,
}

#[derive(Subcommand)]
enum AgreementCommand {
    /// Draw a stratified blinded sample and write the rater sheet + key.
    Sample {
        /// Number of toxic messages to sample.
        #[arg(long, default_value_t = 50)]
        toxic: usize,
        /// Number of non-toxic messages to sample.
        #[arg(long, default_value_t = 50)]
        nontoxic: usize,
        /// Output directory (default: <reports>/agreement).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score filled rater sheets against the answer key.
    Score {
        /// The answer key written by `agreement sample`.
        key: PathBuf,
        /// One or more filled rater sheets.
        #[arg(required = true)]
        raters: Vec<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ByArg {
    Game,
    Genre,
    Stream,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load(&cli.config)?;
    match cli.command {
        Command::Ingest { manifest } => cmd_ingest(&config, &manifest),
        Command::Prelabel { top } => cmd_prelabel(&config, top),
        Command::Classify => cmd_classify(&config),
        Command::Analyze { by } => {
            let by = match by {
                None => AnalyzeBy::Overall,
                Some(ByArg::Game) => AnalyzeBy::Game,
                Some(ByArg::Genre) => AnalyzeBy::Genre,
                Some(ByArg::Stream) => AnalyzeBy::Stream,
            };
            cmd_analyze(&config, by)
        }
        Command::Agreement { command } => match command {
            AgreementCommand::Sample { toxic, nontoxic, out } => {
                cmd_agreement_sample(&config, toxic, nontoxic, out.as_deref())
            }
            AgreementCommand::Score { key, raters } => {
                cmd_agreement_score(&config, &key, &raters)
            }
        },
        Command::Benchmark { dataset } => cmd_benchmark(&config, &dataset),
        Command::Report => cmd_report(&config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
