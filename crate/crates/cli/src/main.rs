//! `xling-adapt`: runs the adaptation pipeline stage by stage from one JSON
//! config. Errors are printed to stderr as one JSON record and mapped to
//! exit codes: 1 runtime, 2 config, 3 data, 4 client, 5 numerical.

mod config;
mod demo;
mod error;
mod http;
mod report;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::{parse_config, LoadedConfig};
use crate::error::{CliError, ErrorKind};
use crate::run::{Command, RunContext};

#[derive(Parser)]
#[command(name = "xling-adapt", version, about = "Cross-lingual financial embedding adaptation pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args)]
struct Common {
    /// Pipeline config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed; overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Drop low-quality records and optionally balance source domains.
    Filter(Common),
    /// Mine (source, positive, negative) triplets from the filtered corpus.
    Mine(Common),
    /// Train the encoder on mined triplets.
    Train(Common),
    /// Score the initial and trained encoder on the configured STS suites.
    Eval(Common),
    /// Measure full-Hangul token coverage of tokenizer vocabularies.
    Tokaudit(Common),
    /// Build before/after, delta and coverage tables.
    Report(Common),
    /// Run every stage in order.
    Pipeline(Common),
    /// Recheck artifact digests against the run manifests.
    Verify(Common),
    /// Print the JSON Schema of the config file.
    Schema,
    /// Write a demo corpus, STS suites, vocabularies and config.
    Fixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn context(common: &Common) -> Result<RunContext, CliError> {
    let LoadedConfig { mut config, base_dir } = parse_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let out_dir = match &common.out {
        Some(out) => out.clone(),
        None => base_dir.join(&config.output_dir),
    };
    Ok(RunContext {
        loaded: LoadedConfig { config, base_dir },
        out_dir,
    })
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (commands, common): (Vec<Command>, &Common) = match &cli.command {
        Sub::Filter(c) => (vec![Command::Filter], c),
        Sub::Mine(c) => (vec![Command::Mine], c),
        Sub::Train(c) => (vec![Command::Train], c),
        Sub::Eval(c) => (vec![Command::Eval], c),
        Sub::Tokaudit(c) => (vec![Command::Tokaudit], c),
        Sub::Report(c) => (vec![Command::Report], c),
        Sub::Pipeline(c) => (Command::PIPELINE.to_vec(), c),
        Sub::Verify(c) => {
            let ctx = context(c)?;
            let v = run::verify(&ctx)?;
            if v.mismatches.is_empty() {
                println!("{} manifests verified", v.manifests);
                return Ok(());
            }
            return Err(CliError::data(format!(
                "{} digest mismatches: {}",
                v.mismatches.len(),
                v.mismatches.join("; ")
            )));
        }
        Sub::Schema => {
            print!("{}", config::SCHEMA);
            return Ok(());
        }
        Sub::Fixtures { out, seed } => {
            let path = demo::write_demo(out, *seed)?;
            println!("{}", path.display());
            return Ok(());
        }
    };
    let ctx = context(common)?;
    for command in commands {
        print_written(&run::dispatch(command, &ctx)?);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::new(ErrorKind::Config, e.kind().to_string());
            let _ = e.print();
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.kind.exit_code());
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.kind.exit_code())
        }
    }
}
