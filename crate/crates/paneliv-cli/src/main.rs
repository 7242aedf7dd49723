//! `paneliv` — panel fixed-effects and instrumental-variable estimation from
//! the command line.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 estimation
//! error, 5 internal error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, CliResult};
use config::{BuildInstrumentConfig, EstimateConfig, SimulateConfig};

#[derive(Parser)]
#[command(name = "paneliv", version, about = "Panel FE / 2SLS estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit FE and (optionally) FE-2SLS models and render a regression table.
    ///
    /// Config keys: panel_csv, entity_col, time_col, transforms, dependent,
    /// exogenous, endogenous, instruments, entity_effects, time_effects,
    /// covariance (classical|robust_hc1|cluster_entity), period_range,
    /// entity_allowlist, groups, group, ar_level, ar_grid, output_dir,
    /// style (text|csv|latex), decimals.
    Estimate(EstimateArgs),
    /// Build the rate-times-neighbor-openness instrument with a provenance
    /// sidecar.
    ///
    /// Config keys: distance_csv, openness_csv, openness_entity_col,
    /// openness_time_col, openness_col, rate_csv, window, include_self,
    /// panel_csv, entity_col, time_col, output_column, output_csv,
    /// provenance_json.
    BuildInstrument(BuildInstrumentArgs),
    /// Run a seeded Monte Carlo experiment comparing FE-OLS and FE-2SLS.
    ///
    /// Config keys: dgp (n_entities, n_periods, beta_true, pi_first_stage,
    /// rho_confound, entity_effect_sd, time_effect_sd, instrument_sd,
    /// outcome_noise_sd, endogenous_noise_sd, seed), reps, report_json.
    Simulate(SimulateArgs),
    /// Print per-column summary statistics of a panel CSV.
    Describe(DescribeArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override: input panel CSV.
    #[arg(long)]
    panel_csv: Option<String>,
    /// Override: covariance estimator (classical|robust_hc1|cluster_entity).
    #[arg(long)]
    covariance: Option<String>,
    /// Override: entity group to estimate on (must exist in `groups`).
    #[arg(long)]
    group: Option<String>,
    /// Override: table style (text|csv|latex).
    #[arg(long)]
    style: Option<String>,
    /// Override: directory for table.csv and results.json.
    #[arg(long)]
    output_dir: Option<String>,
}

#[derive(Args)]
struct BuildInstrumentArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override: include the target's own openness in the weighted average.
    #[arg(long)]
    include_self: bool,
    /// Override: output CSV path.
    #[arg(long)]
    output_csv: Option<String>,
    /// Override: provenance JSON path.
    #[arg(long)]
    provenance_json: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON run configuration; omit for the built-in default scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override: number of replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Override: RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override: path for the JSON report.
    #[arg(long)]
    report_json: Option<String>,
}

#[derive(Args)]
struct DescribeArgs {
    /// Panel CSV path.
    #[arg(long)]
    panel_csv: PathBuf,
    #[arg(long, default_value = "entity")]
    entity_col: String,
    #[arg(long, default_value = "year")]
    time_col: String,
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Estimate(args) => {
            let mut cfg: EstimateConfig = commands::load_json_config(&args.config)?;
            if let Some(v) = args.panel_csv {
                cfg.panel_csv = v;
            }
            if let Some(v) = args.covariance {
                cfg.covariance = serde_json::from_value(serde_json::Value::String(v))
                    .map_err(|e| CliError::config(format!("--covariance: {e}")))?;
            }
            if let Some(v) = args.group {
                cfg.group = Some(v);
            }
            if let Some(v) = args.style {
                cfg.style = v;
            }
            if let Some(v) = args.output_dir {
                cfg.output_dir = Some(v);
            }
            let table = commands::cmd_estimate(&cfg)?;
            print!("{table}");
            Ok(())
        }
        Command::BuildInstrument(args) => {
            let mut cfg: BuildInstrumentConfig = commands::load_json_config(&args.config)?;
            if args.include_self {
                cfg.include_self = true;
            }
            if let Some(v) = args.output_csv {
                cfg.output_csv = v;
            }
            if let Some(v) = args.provenance_json {
                cfg.provenance_json = v;
            }
            commands::cmd_build_instrument(&cfg)
        }
        Command::Simulate(args) => {
            let mut cfg: SimulateConfig = match &args.config {
                Some(path) => commands::load_json_config(path)?,
                None => SimulateConfig {
                    dgp: Default::default(),
                    reps: 100,
                    report_json: None,
                },
            };
            if let Some(v) = args.reps {
                cfg.reps = v;
            }
            if let Some(v) = args.seed {
                cfg.dgp.seed = v;
            }
            if let Some(v) = args.report_json {
                cfg.report_json = Some(v);
            }
            let summary = commands::cmd_simulate(&cfg)?;
            print!("{summary}");
            Ok(())
        }
        Command::Describe(args) => {
            let out = commands::cmd_describe(&args.panel_csv, &args.entity_col, &args.time_col)?;
            print!("{out}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
