//! `softskills` — drive the soft-skill pipeline end to end.
//!
//! Exit codes: 0 success, 1 validation error, 2 I/O error.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Overrides, PipelineConfig};

#[derive(Parser)]
#[command(
    name = "softskills",
    version,
    about = "Soft-skill lexicon construction, detection in job ads, and salary/gender statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean, score, filter, and cluster the crowd-collected skill phrases
    BuildLexicon {
        /// TOML config file; flags override its values
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Detect skill clusters in every corpus ad
    Detect {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write a per-category distinctiveness table
        #[arg(long, value_name = "CATEGORY")]
        distinctiveness: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Matching study, salary bands, regression, and stereotype reports
    Analyze {
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Pretty-print a TSV or JSON report
    Render {
        /// Report file to display
        file: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::BuildLexicon { config, overrides } => {
            let config = PipelineConfig::resolve(config.as_deref(), &overrides)?;
            commands::cmd_build_lexicon(&config)
        }
        Command::Detect {
            config,
            distinctiveness,
            overrides,
        } => {
            let config = PipelineConfig::resolve(config.as_deref(), &overrides)?;
            commands::cmd_detect(&config, distinctiveness.as_deref())
        }
        Command::Analyze { config, overrides } => {
            let config = PipelineConfig::resolve(config.as_deref(), &overrides)?;
            commands::cmd_analyze(&config)
        }
        Command::Render { file } => commands::cmd_render(&file),
    }
}

/// I/O failures exit 2, everything else (validation) exits 1.
fn classify(error: &anyhow::Error) -> u8 {
    for cause in error.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendered help/usage but normalize the exit code:
            // bad flags are validation errors.
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(classify(&error))
        }
    }
}
