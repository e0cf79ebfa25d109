use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dualvta::config;
use dualvta::pipeline::{self, Stage};
use dualvta::slice::{emit_slice, Axis};
use dualvta::validate::{run_suite, Suite};

const EXIT_CONFIG: u8 = 1;
const EXIT_INFEASIBLE: u8 = 3;

#[derive(Parser)]
#[command(name = "dualvta", version, about = "Volume-conductor and activation-region studies for one or two stimulation leads")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress lines on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve every arm and write potentials and floating-contact reports.
    Solve { config: PathBuf },
    /// Solve, then write EF-norm and AF-Max volumes.
    Activation { config: PathBuf },
    /// Solve, evaluate, threshold and write masks plus comparison tables.
    Compare { config: PathBuf },
    /// Build the unit bank and run the configured optimization.
    Optimize { config: PathBuf },
    /// Every stage the scenario defines.
    Run { config: PathBuf },
    /// Run the built-in oracle checks.
    Validate {
        #[arg(long, default_value = "all")]
        suite: Suite,
        /// Replace every check's tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Write one axis-aligned slice of a volume as PGM plus CSV.
    Slice {
        volume: PathBuf,
        #[arg(long)]
        axis: Axis,
        #[arg(long)]
        index: usize,
        /// PGM path; the CSV goes next to it.
        #[arg(long)]
        out: PathBuf,
    },
}

fn stage_command(path: &Path, stage: Stage, quiet: bool) -> anyhow::Result<u8> {
    let loaded = match config::load(path) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return Ok(EXIT_CONFIG);
        }
    };
    let mut log = |line: &str| {
        if !quiet {
            eprintln!("{line}");
        }
    };
    match pipeline::run(&loaded, stage, &mut log) {
        Ok(out) if out.infeasible() => {
            eprintln!("optimization infeasible: no configuration meets the coverage constraint");
            Ok(EXIT_INFEASIBLE)
        }
        Ok(_) => Ok(0),
        Err(e) => {
            eprintln!("error: {e}");
            Ok(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let quiet = cli.quiet;
    match cli.command {
        Command::Solve { config } => stage_command(&config, Stage::Solve, quiet),
        Command::Activation { config } => stage_command(&config, Stage::Activation, quiet),
        Command::Compare { config } => stage_command(&config, Stage::Compare, quiet),
        Command::Optimize { config } => stage_command(&config, Stage::Optimize, quiet),
        Command::Run { config } => stage_command(&config, Stage::Run, quiet),
        Command::Validate { suite, tolerance } => {
            let checks = run_suite(suite, tolerance);
            for c in &checks {
                println!("{}", c.line());
            }
            let failed = checks.iter().filter(|c| !c.passed()).count();
            println!("{} checks, {failed} failed", checks.len());
            Ok(if failed == 0 { 0 } else { EXIT_CONFIG })
        }
        Command::Slice { volume, axis, index, out } => match emit_slice(&volume, axis, index, &out) {
            Ok((pgm, csv)) => {
                if !quiet {
                    eprintln!("wrote {} and {}", pgm.display(), csv.display());
                }
                Ok(0)
            }
            Err(e) => {
                eprintln!("error: {e}");
                Ok(EXIT_CONFIG)
            }
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
