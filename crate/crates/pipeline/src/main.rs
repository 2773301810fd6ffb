use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use earlysib::commands::{self, Run};
use earlysib::config::PipelineConfig;
use earlysib::error::{PipelineError, Result};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "earlysib", version, about = "Early SIB prediction from forum histories")]
struct Cli {
    /// JSON configuration file; defaults are used for anything it omits.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config value, e.g. `--set gen.n_users=500`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Parent directory of run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress progress on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus, gold post labels and ground truth.
    Synth,
    /// Validate and import the corpus and labels named in `paths`.
    Ingest,
    /// Cross-validate and train the post-level detector.
    DetectTrain,
    /// Label every post with the trained detector.
    Label,
    /// Build the user-level dataset from predicted labels.
    BuildUsers,
    /// Cross-validate the user-level model against the baselines.
    Train,
    /// Re-score the saved fold models.
    Evaluate,
    /// Balanced accuracy across context window sizes.
    Sweep,
    /// Component ablations with McNemar tests against the full model.
    Ablate,
    /// Shapley explanations, complexity and lead times.
    Explain,
    /// synth through explain in one go.
    All,
    /// Aggregate the summaries of every run under the output directory.
    Report,
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| PipelineError::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

fn config(cli: &Cli) -> Result<PipelineConfig> {
    let mut c = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    c = c.with_overrides(&cli.sets)?;
    if let Some(o) = &cli.out {
        c.paths.out = o.clone();
    }
    if let Some(s) = cli.seed {
        c.seed = s;
    }
    Ok(c)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = config(cli)?;
    if let Command::Report = cli.command {
        let r = commands::report(&cfg.paths.out)?;
        return print(&r);
    }
    let mut run = Run::open(cfg)?;
    run.quiet = cli.quiet;
    eprintln!("run directory {}", run.dir.display());
    match cli.command {
        Command::Synth => print(&commands::synth(&run)?),
        Command::Ingest => print(&commands::ingest(&run)?),
        Command::DetectTrain => print(&commands::detect_train(&run)?),
        Command::Label => print(&commands::label(&run)?),
        Command::BuildUsers => print(&commands::build_users(&run)?),
        Command::Train => print(&commands::train(&run)?),
        Command::Evaluate => print(&commands::evaluate(&run)?),
        Command::Sweep => print(&commands::sweep(&run)?),
        Command::Ablate => print(&commands::ablate(&run)?),
        Command::Explain => print(&commands::explain(&run)?),
        Command::All => {
            if run.config.paths.corpus.is_some() {
                commands::ingest(&run)?;
            } else {
                commands::synth(&run)?;
            }
            commands::detect_train(&run)?;
            commands::label(&run)?;
            commands::build_users(&run)?;
            print(&commands::train(&run)?)?;
            commands::explain(&run)?;
            Ok(())
        }
        Command::Report => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
