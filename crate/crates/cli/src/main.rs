//! `snsm`: z-scores from expression data, two-component mixture fits,
//! FDR/FNR curves and the simulation benchmark.

mod commands;
mod config;
mod error;
mod io;

use clap::{Parser, Subcommand};
use commands::{FdrArgs, FitArgs, Outcome, PreprocessArgs, SimulateArgs};
use error::{CliError, CliResult, EXIT_INPUT, EXIT_WARN};
use snsm::inference::ModelKind;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "snsm", version, about = "Semiparametric two-component mixtures for differential expression")]
struct Cli {
    /// Worker threads for parallel steps.
    #[arg(long, global = true, env = "SNSM_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expression matrix and group labels to a z-score table.
    Preprocess {
        /// CSV or TSV: gene ID column, then one column per sample.
        #[arg(long)]
        expression: PathBuf,
        /// `sample_id,group` rows with group 1 or 2.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep the K genes with the highest minimum intensity.
        #[arg(long)]
        top_k: Option<usize>,
        /// Use `P = 1 − F(t) + F(−t)` without folding the sign of t.
        #[arg(long)]
        signed_pvalue: bool,
    },
    /// Fit a two-component mixture to a z-score table.
    Fit {
        #[arg(long)]
        zscores: PathBuf,
        #[arg(long, default_value = "semiparametric")]
        method: ModelKind,
        #[arg(long)]
        out_dir: PathBuf,
        /// TOML file with `[ecm]` and `[gmm]` overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        starts: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Grid points of the density-curve output.
        #[arg(long, default_value_t = 401)]
        curve_points: usize,
    },
    /// FDR and FNR estimates across selection thresholds.
    Fdr {
        #[arg(long)]
        posterior: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated thresholds; defaults to 0.01, 0.02, ..., 0.99.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Monte Carlo benchmark over a scenario matrix.
    Simulate {
        /// TOML file with `[[scenario]]` entries.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_delimiter = ',', default_value = "semiparametric,parametric")]
        methods: Vec<ModelKind>,
    },
}

fn run(cli: Cli) -> CliResult<Outcome> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    match cli.command {
        Command::Preprocess {
            expression,
            labels,
            out,
            top_k,
            signed_pvalue,
        } => commands::preprocess(&PreprocessArgs {
            expression,
            labels,
            out,
            top_k,
            signed_pvalue,
        }),
        Command::Fit {
            zscores,
            method,
            out_dir,
            config,
            starts,
            max_iter,
            curve_points,
        } => commands::fit_cmd(&FitArgs {
            zscores,
            method,
            out_dir,
            config,
            starts,
            max_iter,
            curve_points,
        }),
        Command::Fdr {
            posterior,
            out,
            thresholds,
        } => commands::fdr(&FdrArgs {
            posterior,
            out,
            thresholds,
        }),
        Command::Simulate {
            config,
            out_dir,
            seed,
            methods,
        } => commands::simulate(&SimulateArgs {
            config,
            out_dir,
            seed,
            methods,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(out) if out.warnings.is_empty() => ExitCode::SUCCESS,
        Ok(out) => {
            for w in &out.warnings {
                eprintln!("warning: {w}");
            }
            ExitCode::from(EXIT_WARN)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
