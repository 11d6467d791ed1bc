//! Binary entry point: argument parsing, config loading, output routing.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use multipass_cli::config::{ExperimentConfig, OutputFormat, Overrides, ShotSpec};
use multipass_cli::run::{self, AppError};
use multipass_core::estimators::Method;

#[derive(Parser)]
#[command(
    name = "multipass",
    version,
    about = "Multi-pass SU(2) gate simulator and single-pass error estimator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Propagate one sequence by brute-force product and by closed form
    Propagate(RunArgs),
    /// Tabulate populations over a linear grid of one free parameter
    Sweep(RunArgs),
    /// Recover single-pass gate errors from multi-pass measurements
    Estimate(EstimateArgs),
    /// Suggest pass counts that amplify a suspected error
    SuggestN {
        /// Suspected single-pass error, in (0, 0.5]
        #[arg(long)]
        epsilon: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Path to a TOML experiment config
    #[arg(long)]
    config: PathBuf,
    /// Override the shot budget: "exact" or a positive integer
    #[arg(long)]
    shots: Option<String>,
    /// Override the master RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Write the result to this path (relative paths honor MULTIPASS_OUT_DIR)
    #[arg(long)]
    out: Option<String>,
    /// Output format for --out
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Override the estimation protocol
    #[arg(long)]
    protocol: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for OutputFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }
    }
}

fn parse_shots(s: &str) -> Result<ShotSpec, AppError> {
    if s == "exact" {
        return Ok(ShotSpec::Exact);
    }
    match s.parse::<u64>() {
        Ok(n) if n > 0 => Ok(ShotSpec::Count(n)),
        _ => Err(AppError::Config(format!(
            "--shots must be \"exact\" or a positive integer, got \"{s}\""
        ))),
    }
}

fn parse_protocol(s: &str) -> Result<Method, AppError> {
    match s {
        "real_a" => Ok(Method::RealA),
        "sum_large_p" => Ok(Method::SumLargeP),
        "ratio_general" => Ok(Method::RatioGeneral),
        "phase_gate_sum" => Ok(Method::PhaseGateSum),
        "phase_gate_peak" => Ok(Method::PhaseGatePeak),
        _ => Err(AppError::Config(format!(
            "unknown protocol \"{s}\" (expected real_a, sum_large_p, ratio_general, \
             phase_gate_sum, phase_gate_peak)"
        ))),
    }
}

fn load_config(args: &RunArgs, protocol: Option<Method>) -> Result<ExperimentConfig, AppError> {
    let text = fs::read_to_string(&args.config).map_err(|e| {
        AppError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut config = ExperimentConfig::from_toml(&text)?;
    let overrides = Overrides {
        shots: args.shots.as_deref().map(parse_shots).transpose()?,
        seed: args.seed,
        out: args.out.clone(),
        format: args.format.map(Into::into),
        protocol,
    };
    overrides.apply(&mut config);
    config.validate()?;
    Ok(config)
}

fn output_format(config: &ExperimentConfig, native: OutputFormat) -> OutputFormat {
    config
        .output
        .as_ref()
        .and_then(|o| o.format)
        .unwrap_or(native)
}

fn output_path(config: &ExperimentConfig) -> Option<String> {
    config.output.as_ref().and_then(|o| o.path.clone())
}

fn write_out(path: &str, body: &str) -> Result<(), AppError> {
    let resolved = run::resolve_out_path(path);
    if let Some(parent) = resolved.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(resolved, body)?;
    Ok(())
}

fn dispatch() -> Result<(), AppError> {
    match Cli::parse().command {
        Cmd::Propagate(args) => {
            let config = load_config(&args, None)?;
            if output_format(&config, OutputFormat::Json) == OutputFormat::Csv {
                return Err(AppError::Config(
                    "propagate emits no tabular rows; use format = \"json\"".into(),
                ));
            }
            let report = run::cmd_propagate(&config)?;
            print!("{}", run::render_propagate(&report));
            if let Some(path) = output_path(&config) {
                write_out(&path, &(run::to_json_pretty(&report)? + "\n"))?;
            }
            Ok(())
        }
        Cmd::Sweep(args) => {
            let config = load_config(&args, None)?;
            let report = run::cmd_sweep(&config)?;
            let body = match output_format(&config, OutputFormat::Csv) {
                OutputFormat::Csv => run::sweep_csv_string(&report)?,
                OutputFormat::Json => run::to_json_pretty(&report)? + "\n",
            };
            match output_path(&config) {
                Some(path) => write_out(&path, &body)?,
                None => print!("{body}"),
            }
            Ok(())
        }
        Cmd::Estimate(args) => {
            let protocol = args.protocol.as_deref().map(parse_protocol).transpose()?;
            let config = load_config(&args.run, protocol)?;
            if output_format(&config, OutputFormat::Json) == OutputFormat::Csv {
                return Err(AppError::Config(
                    "estimate emits a json report; use format = \"json\"".into(),
                ));
            }
            let report = run::cmd_estimate(&config)?;
            let body = run::to_json_pretty(&report)? + "\n";
            print!("{body}");
            if let Some(path) = output_path(&config) {
                write_out(&path, &body)?;
            }
            Ok(())
        }
        Cmd::SuggestN { epsilon } => {
            let report = run::cmd_suggest_n(epsilon)?;
            print!("{}", run::render_suggest(&report));
            Ok(())
        }
    }
}

fn main() {
    std::process::exit(match dispatch() {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    });
}
