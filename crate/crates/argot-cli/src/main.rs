//! `argot`: build a workspace from two corpora, then rank, simulate, and
//! detect against it.
//!
//! Results go to standard output as tab-separated rows; everything
//! diagnostic goes to standard error. Exit codes: 0 success, 2 usage,
//! configuration, or I/O failure, 3 unknown word, 4 workspace missing or
//! stale.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use argot_core::error::Error;
use argot_core::eval::{DetectConfig, Method};
use argot_core::store::{self, RunConfig, Workspace};

/// Name of the environment variable that supplies a workspace directory when
/// no command-line flag or config entry does.
const WORKSPACE_ENV: &str = "ARGOT_WORKSPACE";

#[derive(Parser)]
#[command(
    name = "argot",
    version,
    about = "Dark-jargon identification over paired corpora",
    after_help = "The workspace directory is taken from --workspace, then the \
                  ARGOT_WORKSPACE environment variable, then the config file."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build vocabulary, context indexes, and embeddings into a workspace.
    Build(BuildArgs),
    /// Rank clean candidates for one dark-side word.
    Rank(RankArgs),
    /// Run the clean-clean simulation and write its reports.
    Simulate(SimulateArgs),
    /// Flag dark-side words whose own surface form ranks poorly.
    Detect(DetectArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Workspace directory; overrides the environment and the config file.
    #[arg(long)]
    workspace: Option<PathBuf>,
}

#[derive(Args)]
struct RankArgs {
    /// Workspace directory of a completed build.
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Dark-side word to look up.
    #[arg(long)]
    word: String,
    /// Ranking method.
    #[arg(long, value_parser = parse_method)]
    method: Method,
    /// Number of candidates to print.
    #[arg(long, default_value_t = 10)]
    top: usize,
}

#[derive(Args)]
struct SimulateArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Workspace directory; overrides the environment and the config file.
    #[arg(long)]
    workspace: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    /// Workspace directory of a completed build.
    #[arg(long)]
    workspace: Option<PathBuf>,
    /// Highest acceptable self rank; words ranking worse are flagged.
    #[arg(long, default_value_t = 10)]
    threshold: usize,
    /// Maximum number of flagged words to report.
    #[arg(long, default_value_t = 100)]
    max: usize,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|e| format!("{e}"))
}

/// Flag, then environment, then config file; anything else is a usage error.
fn resolve_workspace(
    flag: Option<PathBuf>,
    from_config: Option<&PathBuf>,
) -> Result<PathBuf, Error> {
    if let Some(dir) = flag {
        return Ok(dir);
    }
    if let Ok(dir) = std::env::var(WORKSPACE_ENV) {
        if !dir.is_empty() {
            return Ok(PathBuf::from(dir));
        }
    }
    if let Some(dir) = from_config {
        return Ok(dir.clone());
    }
    Err(Error::Config(format!(
        "no workspace directory given; pass --workspace, set {WORKSPACE_ENV}, \
         or add a workspace entry to the config"
    )))
}

fn cmd_build(args: BuildArgs) -> Result<(), Error> {
    let config = RunConfig::load(&args.config)?;
    let dir = resolve_workspace(args.workspace, config.workspace.as_ref())?;
    let outcome = store::build(&config, &dir)?;
    for name in outcome.rebuilt {
        println!("{name}\tbuilt");
    }
    for name in outcome.reused {
        println!("{name}\tup to date");
    }
    eprintln!("argot: workspace ready at {}", dir.display());
    Ok(())
}

fn cmd_rank(args: RankArgs) -> Result<(), Error> {
    let dir = resolve_workspace(args.workspace, None)?;
    let ws = Workspace::at(dir);
    let ranked = store::rank(&ws, &args.word, args.method, args.top)?;
    for (i, (word, score)) in ranked.candidates.iter().enumerate() {
        println!("{}\t{}\t{:.6}", i + 1, word, score);
    }
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let config = RunConfig::load(&args.config)?;
    let dir = resolve_workspace(args.workspace, config.workspace.as_ref())?;
    let report = store::simulate(&config, &dir)?;
    print!("{}", report.tsv_summary());
    eprintln!(
        "argot: simulation reports written under {}",
        dir.join("reports").display()
    );
    Ok(())
}

fn cmd_detect(args: DetectArgs) -> Result<(), Error> {
    let dir = resolve_workspace(args.workspace, None)?;
    let ws = Workspace::at(dir.clone());
    let detect_cfg = DetectConfig {
        self_rank_threshold: args.threshold,
        max_results: args.max,
        ..DetectConfig::default()
    };
    let report = store::detect(&ws, &detect_cfg)?;
    print!("{}", report.to_tsv());
    eprintln!(
        "argot: mapping report written under {}",
        dir.join("reports").display()
    );
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::UnknownWord(_) => 3,
        Error::StaleWorkspace(_) => 4,
        Error::Stage { source, .. } => exit_code(source),
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Build(args) => cmd_build(args),
        Command::Rank(args) => cmd_rank(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Detect(args) => cmd_detect(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("argot: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
