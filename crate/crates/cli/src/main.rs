//! `vbflex`: drive fleet simulations and power certifications from TOML
//! configurations.
//!
//! Every run writes a `manifest.toml` into the output directory; feeding
//! that manifest back via `--config` reproduces the run bit for bit.
//! Exit codes: 0 success, 1 configuration or input error, 2 degenerate
//! scenario (an endpoint of the search bracket failed verification).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use vbflex_core::config::{ConfigContext, Manifest, ManifestMeta, PrePeriod};
use vbflex_core::error::{Error, Result};
use vbflex_core::market::run_scenario;
use vbflex_core::predict::{probability_curve, search_certified_power};
use vbflex_core::report::{
    curve_csv_string, to_json_string, trace_csv_string, write_text, PredictionReport,
    ScenarioReport,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// Compact comma-separated summary.
    Csv,
    /// Pretty JSON.
    Structured,
}

#[derive(Parser)]
#[command(
    name = "vbflex",
    version,
    about = "Virtual-battery toolkit for thermostatic load fleets"
)]
struct Cli {
    /// Run configuration, or a previous run's manifest.toml.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses one per core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Stdout summary format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured horizon simulation and write trace.csv.
    Simulate,
    /// Certify a dependable power by bisection and write report.json.
    Predict,
    /// Sample a success-probability curve over a power range.
    Curve {
        /// First sampled power, kW.
        #[arg(long)]
        from_kw: f64,
        /// Last sampled power, kW.
        #[arg(long)]
        to_kw: f64,
        /// Number of evenly spaced samples (at least 2).
        #[arg(long, default_value_t = 11)]
        points: usize,
    },
    /// Full market participation: certify, bid, validate, deliver.
    Scenario,
    /// Print the per-batch trial count implied by [prediction].
    Trials,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::DegenerateScenario(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot size the thread pool: {e}")))?;
    }
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("every command needs --config <file>".into()))?;
    let ctx = ConfigContext::load(config_path)?;
    let master_seed = cli.seed.unwrap_or(ctx.config().run.seed);

    match &cli.command {
        Command::Simulate => simulate(&cli, &ctx, master_seed),
        Command::Predict => predict(&cli, &ctx, master_seed),
        Command::Curve {
            from_kw,
            to_kw,
            points,
        } => curve(&cli, &ctx, master_seed, *from_kw, *to_kw, *points),
        Command::Scenario => scenario(&cli, &ctx, master_seed),
        Command::Trials => trials(&cli, &ctx),
    }
}

fn prepare_out(cli: &Cli) -> Result<PathBuf> {
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("vbflex-out"));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_manifest(
    dir: &Path,
    command: &str,
    master_seed: u64,
    ctx: &ConfigContext,
    gamma_kw: Option<f64>,
    pre: Option<&PrePeriod>,
) -> Result<()> {
    let mut meta = ManifestMeta::new(command, master_seed);
    meta.gamma_kw = gamma_kw;
    if let Some(pre) = pre {
        meta.pre_period_cap_minutes = ctx
            .config()
            .scenario
            .as_ref()
            .map(|s| s.pre_period_cap_minutes);
        meta.pre_period_applied_minutes = Some(pre.applied_minutes);
    }
    Manifest::new(meta, ctx.config())?.write(&dir.join("manifest.toml"))
}

fn simulate(cli: &Cli, ctx: &ConfigContext, master_seed: u64) -> Result<()> {
    let trace = ctx.run_simulation(master_seed)?;
    let dir = prepare_out(cli)?;
    write_text(&dir.join("trace.csv"), &trace_csv_string(&trace.rows)?)?;
    write_manifest(&dir, "simulate", master_seed, ctx, None, None)?;

    let summary = &trace.summary;
    match cli.format {
        Format::Csv => {
            println!(
                "steps,managed_steps,supply_violations,max_abs_error_kw,toggles,overrides,band_violations"
            );
            println!(
                "{},{},{},{},{},{},{}",
                summary.steps,
                summary.managed_steps,
                summary.supply_violations,
                summary
                    .max_abs_error_kw
                    .map(|v| format!("{v}"))
                    .unwrap_or_default(),
                summary.toggles,
                summary.overrides,
                summary.band_violations
            );
        }
        Format::Structured => print!("{}", to_json_string(summary)?),
    }
    Ok(())
}

fn predict(cli: &Cli, ctx: &ConfigContext, master_seed: u64) -> Result<()> {
    let (oracle, pre) = ctx.oracle_scenario()?;
    let confidence = ctx.confidence()?;
    let bisection = ctx.bisection()?;
    let started = Instant::now();
    let result = search_certified_power(&oracle, &confidence, &bisection, master_seed)?;
    let wall_time_ms = started.elapsed().as_millis() as u64;

    let scenario_id = ctx.config().scenario.as_ref().map(|s| s.id.clone());
    let report = PredictionReport::new(scenario_id, &result, wall_time_ms);
    let dir = prepare_out(cli)?;
    vbflex_core::report::write_json(&dir.join("report.json"), &report)?;
    write_manifest(
        &dir,
        "predict",
        master_seed,
        ctx,
        Some(bisection.gamma_kw),
        pre.as_ref(),
    )?;

    match cli.format {
        Format::Csv => {
            println!("power_kw,final_midpoint_kw,iterations,trials_total");
            println!(
                "{},{},{},{}",
                result.power_kw, result.final_midpoint_kw, result.iterations, result.trials_total
            );
        }
        Format::Structured => print!("{}", to_json_string(&report)?),
    }
    Ok(())
}

fn curve(
    cli: &Cli,
    ctx: &ConfigContext,
    master_seed: u64,
    from_kw: f64,
    to_kw: f64,
    points: usize,
) -> Result<()> {
    if points < 2 {
        return Err(Error::InvalidConfig(format!(
            "--points must be at least 2, got {points}"
        )));
    }
    let powers: Vec<f64> = (0..points)
        .map(|i| from_kw + (to_kw - from_kw) * i as f64 / (points - 1) as f64)
        .collect();
    let (oracle, pre) = ctx.oracle_scenario()?;
    let confidence = ctx.confidence()?;
    let sampled = probability_curve(&oracle, &powers, &confidence, master_seed)?;

    let dir = prepare_out(cli)?;
    let csv = curve_csv_string(&sampled)?;
    write_text(&dir.join("curve.csv"), &csv)?;
    write_manifest(&dir, "curve", master_seed, ctx, None, pre.as_ref())?;

    match cli.format {
        Format::Csv => print!("{csv}"),
        Format::Structured => print!("{}", to_json_string(&sampled)?),
    }
    Ok(())
}

fn scenario(cli: &Cli, ctx: &ConfigContext, master_seed: u64) -> Result<()> {
    let (spec, pre) = ctx.scenario_spec()?;
    let started = Instant::now();
    let outcome = run_scenario(&spec, master_seed, None)?;
    let wall_time_ms = started.elapsed().as_millis() as u64;

    let report = ScenarioReport::new(&outcome, wall_time_ms);
    let dir = prepare_out(cli)?;
    vbflex_core::report::write_json(&dir.join("report.json"), &report)?;
    if let Some(delivery) = &outcome.delivery {
        write_text(&dir.join("trace.csv"), &trace_csv_string(&delivery.rows)?)?;
    }
    write_manifest(
        &dir,
        "scenario",
        master_seed,
        ctx,
        Some(spec.bisection.gamma_kw),
        Some(&pre),
    )?;

    match cli.format {
        Format::Csv => {
            println!("scenario_id,certified_kw,bid_kw,valid,delivery_max_abs_error_kw");
            println!(
                "{},{},{},{},{}",
                outcome.scenario_id,
                outcome.prediction.power_kw,
                outcome.bid.quantized_power_kw,
                outcome.validity.valid,
                outcome
                    .delivery
                    .as_ref()
                    .and_then(|d| d.summary.max_abs_error_kw)
                    .map(|v| format!("{v}"))
                    .unwrap_or_default()
            );
        }
        Format::Structured => print!("{}", to_json_string(&report)?),
    }
    Ok(())
}

fn trials(cli: &Cli, ctx: &ConfigContext) -> Result<()> {
    let n = ctx.confidence()?.required_trials()?;
    match cli.format {
        Format::Csv => println!("{n}"),
        Format::Structured => {
            print!(
                "{}",
                to_json_string(&serde_json::json!({ "required_trials": n }))?
            )
        }
    }
    Ok(())
}
