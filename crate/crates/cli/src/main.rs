use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod io;

use io::UsageError;

#[derive(Parser, Debug)]
#[command(name = "proxforge", version, about = "Build and score proximity question-answering data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate perception and reasoning conversations.
    Generate(GenerateArgs),
    /// Convert bbox-annotated scenes into an eval set and answer key.
    ConvertGqa(ConvertGqaArgs),
    /// Convert a manual-center manifest with absolute depth into an eval set.
    ConvertMake3d(ConvertMake3dArgs),
    /// Descriptive statistics of a conversation file or eval set.
    Stats(StatsArgs),
    /// Score model responses against an eval set.
    Score(ScoreArgs),
    /// Flag objects whose center depth disagrees with their bbox, and
    /// shared captions.
    Audit(AuditArgs),
    /// Write ground-truth responses for an eval set.
    Oracle(OracleArgs),
    /// Summarize any file this tool reads or writes.
    Inspect(InspectArgs),
}

/// Options shared by every command that builds questions.
#[derive(Args, Debug, Default, Clone)]
pub struct GenOptions {
    /// JSON configuration file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Falls back to the config file, then $PROXFORGE_SEED, then 0.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_pairs: Option<usize>,
    #[arg(long)]
    pub perception_cap: Option<usize>,
    /// Direct to chain-of-thought weights, e.g. 1:1.
    #[arg(long)]
    pub mode_ratio: Option<String>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Odd side of the median sampling window.
    #[arg(long)]
    pub median_window: Option<usize>,
    /// Worker threads; output order never depends on it.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    /// coco_vg or make3d_manifest.
    #[arg(long, default_value = "coco_vg")]
    pub format: String,
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Where rejected entries and skipped scenes are listed.
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenOptions,
}

#[derive(Args, Debug)]
pub struct ConvertGqaArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    /// Eval questions.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Answer key, kept apart from the questions.
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenOptions,
}

#[derive(Args, Debug)]
pub struct ConvertMake3dArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of absolute ground-truth depth maps.
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub rejects: Option<PathBuf>,
    #[command(flatten)]
    pub gen: GenOptions,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Conversation JSONL or eval-set JSONL.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Answer key for an eval set, for the label histogram.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Report file; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also print a text histogram to stderr.
    #[arg(long)]
    pub histogram: bool,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Sq Rel denominator: pred or gt.
    #[arg(long)]
    pub sqrel_den: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub scenes: Option<PathBuf>,
    #[arg(long, default_value = "coco_vg")]
    pub format: String,
    #[arg(long)]
    pub depth_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[command(flatten)]
    pub gen: GenOptions,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[arg(long)]
    pub eval: PathBuf,
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    pub path: PathBuf,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::ConvertGqa(a) => commands::convert_gqa(a),
        Command::ConvertMake3d(a) => commands::convert_make3d(a),
        Command::Stats(a) => commands::stats(a),
        Command::Score(a) => commands::score(a),
        Command::Audit(a) => commands::audit(a),
        Command::Oracle(a) => commands::oracle(a),
        Command::Inspect(a) => commands::inspect(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.chain().any(|c| c.is::<UsageError>()) => {
            eprintln!("error: {e:#}");
            eprintln!("run `proxforge --help` for usage");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
