use std::path::PathBuf;

use clap::{Parser, Subcommand};

use optneq::harness::{
    build_experiment, preset, run_experiment, validate_setup, ExperimentConfig, MANIFEST_FILE,
    PRESET_NAMES,
};
use optneq::metrics::{fit_decay, parse_csv, MetricField};
use optneq::solvers::{sequential_regularization, TIKHONOV_EVAL_BUDGET};
use optneq::{Error, Result};

/// Environment variable naming the default parent of output directories.
const OUT_DIR_VAR: &str = "OPTNEQ_OUT_DIR";

#[derive(Parser)]
#[command(
    name = "optneq",
    version,
    about = "Distributed equilibrium-selection experiments via iteratively regularized gradient tracking"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Show a built-in experiment preset (summary, or full JSON with --dump).
    Preset {
        /// One of the built-in names; run with an unknown name to list them.
        name: String,
        /// Print the full config JSON instead of a summary.
        #[arg(long)]
        dump: bool,
    },
    /// Validate a configuration and print one line per checked assumption.
    Check {
        /// Path to a config JSON file, or `preset:<name>`.
        config: String,
    },
    /// Solve the regularization sweep and print the solution trajectory.
    Oracle {
        /// Path to a config JSON file, or `preset:<name>`.
        config: String,
        /// Write the solution JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every schedule variant and write CSV logs plus manifest.json.
    Run {
        /// Path to a config JSON file, or `preset:<name>`.
        config: String,
        /// Output directory (default: config out_dir, then $OPTNEQ_OUT_DIR/<name>,
        /// then ./runs/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run even if hard validation checks fail.
        #[arg(long)]
        force: bool,
        /// Worker thread cap (default: one per core). Never affects output bytes.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Fit a decay exponent to one metric column of a CSV log.
    Rates {
        /// Metrics CSV written by `run`.
        csv: PathBuf,
        /// Column to fit: lower, upper, consensus_x, consensus_y,
        /// dist_tikhonov, or dist_opt.
        #[arg(long)]
        field: String,
        /// Target decay exponent p for the bound constant `max e·(k+gamma)^p`.
        #[arg(long)]
        exponent: f64,
        /// Schedule offset added to k before taking logs.
        #[arg(long)]
        gamma: f64,
        /// Iteration window `KLO:KHI` (inclusive).
        #[arg(long)]
        window: String,
    },
}

fn load_config(arg: &str) -> Result<ExperimentConfig> {
    if let Some(name) = arg.strip_prefix("preset:") {
        preset(name)
    } else {
        let text = std::fs::read_to_string(arg)?;
        ExperimentConfig::from_json(&text)
    }
}

fn resolve_out_dir(cli_out: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    cli_out
        .or_else(|| cfg.out_dir.clone())
        .or_else(|| {
            std::env::var_os(OUT_DIR_VAR).map(|d| PathBuf::from(d).join(&cfg.name))
        })
        .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.name))
}

fn parse_window(text: &str) -> Result<(u64, u64)> {
    let (lo, hi) = text
        .split_once(':')
        .ok_or_else(|| Error::Parse(format!("window must be KLO:KHI, got {text:?}")))?;
    let lo = lo
        .trim()
        .parse::<u64>()
        .map_err(|e| Error::Parse(format!("window start {lo:?}: {e}")))?;
    let hi = hi
        .trim()
        .parse::<u64>()
        .map_err(|e| Error::Parse(format!("window end {hi:?}: {e}")))?;
    Ok((lo, hi))
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::Dimension(_) | Error::Parse(_) => 1,
        Error::Numerical(_) | Error::Divergence { .. } | Error::NotConverged { .. } => 2,
        Error::Io(_) => 3,
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::Preset { name, dump } => {
            let cfg = preset(&name)?;
            if dump {
                println!("{}", cfg.to_json());
            } else {
                println!("{}: {} on {:?} (m = {})", cfg.name, cfg.algorithm, cfg.topology.kind, cfg.topology.m);
                println!(
                    "  {} iterations, log every {}, {} path(s), pairs {:?}",
                    cfg.iterations, cfg.log_every, cfg.paths, cfg.schedule.pairs
                );
                println!("  presets: {}", PRESET_NAMES.join(", "));
            }
            Ok(0)
        }
        Cmd::Check { config } => {
            let cfg = load_config(&config)?;
            let report = validate_setup(&cfg);
            println!("{report}");
            Ok(if report.passed() { 0 } else { 1 })
        }
        Cmd::Oracle { config, out } => {
            let cfg = load_config(&config)?;
            let built = build_experiment(&cfg)?;
            let solution = sequential_regularization(
                &built.instance,
                &cfg.oracle.reg_sweep,
                &cfg.oracle.tolerances,
                None,
                TIKHONOV_EVAL_BUDGET,
            )?;
            let json = serde_json::to_string_pretty(&solution)
                .expect("solution serialization cannot fail");
            match out {
                Some(path) => {
                    std::fs::write(&path, json)?;
                    println!("wrote {}", path.display());
                }
                None => println!("{json}"),
            }
            Ok(0)
        }
        Cmd::Run { config, out, force, workers } => {
            let cfg = load_config(&config)?;
            let dir = resolve_out_dir(out, &cfg);
            let manifest = run_experiment(&cfg, &dir, workers, force)?;
            let mut failed = 0;
            for record in &manifest.variants {
                match &record.error {
                    None => {
                        let mut files = record.files.clone();
                        files.extend(record.mean_file.clone());
                        println!(
                            "variant ({}, {}): {}",
                            record.pair.0,
                            record.pair.1,
                            files.join(", ")
                        );
                    }
                    Some(detail) => {
                        failed += 1;
                        eprintln!(
                            "variant ({}, {}) aborted: {detail}",
                            record.pair.0, record.pair.1
                        );
                    }
                }
            }
            println!("wrote {}", dir.join(MANIFEST_FILE).display());
            Ok(if failed > 0 { 2 } else { 0 })
        }
        Cmd::Rates { csv, field, exponent, gamma, window } => {
            let rows = parse_csv(&std::fs::read_to_string(&csv)?)?;
            let field: MetricField = field.parse()?;
            let fit = fit_decay(&rows, field, parse_window(&window)?, exponent, gamma)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&fit).expect("fit serialization cannot fail")
            );
            Ok(0)
        }
    }
}

fn main() {
    let code = match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}
