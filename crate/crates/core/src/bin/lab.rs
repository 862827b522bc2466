use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use conlab::error::Error;
use conlab::lab::gen::{generate, SynthSpec};
use conlab::lab::{catalog_text, output_dir, run_experiment, write_outputs, ExperimentConfig};

const AFTER_HELP: &str = "\
Each run writes, per experiment, to $LAB_OUTPUT_DIR/<id> (else the config's
output_dir, else lab_output/<id>):
  report.csv   experiment,check,tag,value,bound,slack,pass
               one row per checked relation; slack >= 0 means it holds
               (strict relations need slack > 0); same config, same bytes
  summary.txt  counts, status, wall time, tightest and failing records
  *.svg        plots
  *.csv        experiment-specific tables

Exit status: 0 all checks pass, 1 a check failed or an experiment could not
run, 2 usage or config error.";

#[derive(Parser)]
#[command(name = "lab", version, about = "Run constrained-learning experiments", after_help = AFTER_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run experiments from config files (concurrently)
    Run {
        #[arg(required = true)]
        configs: Vec<PathBuf>,
    },
    /// List experiment ids, what they check, and their tolerances
    List,
    /// Generate a synthetic distribution from a [synth] spec
    Gen {
        spec: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
}

const OK: u8 = 0;
const FAILED: u8 = 1;
const USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    ExitCode::from(match cli.command {
        Command::List => {
            print!("{}", catalog_text());
            OK
        }
        Command::Gen { spec, output } => gen(&spec, &output),
        Command::Run { configs } => run(&configs),
    })
}

fn gen(spec: &Path, output: &Path) -> u8 {
    let parsed = std::fs::read_to_string(spec)
        .map_err(Error::from)
        .and_then(|t| SynthSpec::parse(&t));
    let parsed = match parsed {
        Ok(s) => s,
        Err(e) => {
            eprintln!("lab: {}: {e}", spec.display());
            return USAGE;
        }
    };
    match generate(&parsed, output) {
        Ok(g) => {
            if let Some(w) = g.warning {
                eprintln!("lab: warning: {w}");
            }
            for f in &g.files {
                println!("{}", f.display());
            }
            println!("noise rate {}", g.noise_rate);
            OK
        }
        Err(e) => {
            eprintln!("lab: {e}");
            FAILED
        }
    }
}

fn run(paths: &[PathBuf]) -> u8 {
    // parse everything first so a bad config runs nothing
    let mut configs = Vec::new();
    for p in paths {
        match ExperimentConfig::load(p) {
            Ok(c) => configs.push(c),
            Err(e) => {
                eprintln!("lab: {}: {e}", p.display());
                return USAGE;
            }
        }
    }
    let results: Vec<(String, u8)> = configs
        .par_iter()
        .map(|cfg| {
            let report = match run_experiment(cfg) {
                Ok(r) => r,
                Err(e) => return (format!("{}: ERROR {e}", cfg.id), FAILED),
            };
            let dir = output_dir(cfg);
            if let Err(e) = write_outputs(&report, &dir) {
                return (format!("{}: ERROR writing {}: {e}", cfg.id, dir.display()), FAILED);
            }
            let failed = report.failures().count();
            let line = format!(
                "{}: {} ({} records, {} failed, {:.2}s) -> {}",
                cfg.id,
                if report.passed() { "PASS" } else { "FAIL" },
                report.records.len(),
                failed,
                report.wall_time.as_secs_f64(),
                dir.display()
            );
            (line, if report.passed() { OK } else { FAILED })
        })
        .collect();
    for (line, _) in &results {
        println!("{line}");
    }
    results.iter().map(|r| r.1).max().unwrap_or(OK)
}
