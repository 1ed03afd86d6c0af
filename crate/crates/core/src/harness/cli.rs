//! `ukf-bench` command line.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error,
//! 3 runtime numerical (or I/O) failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::harness::config::{
    parse_filters, parse_list, ConfigOverrides, ExperimentConfig, SystemId,
};
use crate::harness::experiment::{run_experiment, write_csv, Experiment};
use crate::harness::verify::{verify_linear, VerifyConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "ukf-bench",
    version,
    about = "Kalman / unscented filter benchmark"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run filters on one simulated system and optionally write a CSV.
    Run(Box<RunArgs>),
    /// Check the linear-system equivalences on random systems.
    Verify(VerifyArgs),
    /// Run the Van der Pol and Lorenz benchmarks with default settings.
    Reproduce(ReproduceArgs),
}

fn parse_system(s: &str) -> Result<SystemId, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
struct RunArgs {
    /// vdp, lorenz or linear-random
    #[arg(long, value_parser = parse_system)]
    system: Option<SystemId>,
    /// Comma-separated subset of kf,ukf2,ukf1,mukf
    #[arg(long)]
    filters: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    ts: Option<f64>,
    #[arg(long = "q-scale")]
    q_scale: Option<f64>,
    #[arg(long = "r-scale")]
    r_scale: Option<f64>,
    /// Comma-separated initial state
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// One value (scaled identity), n (diagonal) or n*n (row-major)
    #[arg(long, allow_hyphen_values = true)]
    p0: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// key = value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Add jitter * I when an ensemble covariance fails to factor
    #[arg(long)]
    jitter: Option<f64>,
    /// State dimension of linear-random
    #[arg(long = "state-dim")]
    state_dim: Option<usize>,
    /// Output dimension of linear-random
    #[arg(long = "output-dim")]
    output_dim: Option<usize>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    systems: u64,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    perturbations: usize,
}

#[derive(Debug, Args)]
struct ReproduceArgs {
    /// Directory receiving vdp.csv and lorenz.csv
    #[arg(long = "out-dir", default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

fn exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) | Error::InvalidParameter(_) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn print_summary(label: &str, e: &Experiment) {
    println!(
        "{label}: {} steps, filters {}",
        e.records.len(),
        e.filters
            .iter()
            .map(|f| f.name())
            .collect::<Vec<_>>()
            .join(",")
    );
    if let Some(last) = e.records.last() {
        for (kind, f) in e.filters.iter().zip(&last.filters) {
            println!("  final trace P [{}] = {:.6e}", kind.name(), f.trace);
        }
    }
    let r = &e.report;
    for (name, s) in [("ukf1", r.ukf1_summary), ("mukf", r.mukf_summary)] {
        if let Some(s) = s {
            println!(
                "  relerr {name} vs ukf2: steady-state mean {:.6e} (last {} steps), max |.| {:.6e}",
                s.steady_state_mean, r.window, s.max_abs
            );
        }
    }
}

fn run(args: RunArgs) -> Result<(), Error> {
    let flags = ConfigOverrides {
        system: args.system,
        filters: args.filters.as_deref().map(parse_filters),
        steps: args.steps.map(|s| s as usize),
        seed: args.seed,
        alpha: args.alpha,
        ts: args.ts,
        q_scale: args.q_scale,
        r_scale: args.r_scale,
        x0: args
            .x0
            .as_deref()
            .map(|v| parse_list("x0", v))
            .transpose()?,
        p0: args
            .p0
            .as_deref()
            .map(|v| parse_list("p0", v))
            .transpose()?,
        out: args.out,
        jitter: args.jitter,
        state_dim: args.state_dim,
        output_dim: args.output_dim,
        ..Default::default()
    };
    let merged = match &args.config {
        Some(path) => flags.or(ConfigOverrides::from_file(path).map_err(|e| match e {
            Error::Io { path, source } => Error::Config(format!("{}: {source}", path.display())),
            e => e,
        })?),
        None => flags,
    };
    let config = merged.resolve()?;
    let experiment = run_experiment(&config)?;
    print_summary(config.system.name(), &experiment);
    if let Some(path) = &config.out {
        write_csv(&experiment, path)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}

fn verify(args: VerifyArgs) -> Result<bool, Error> {
    let config = VerifyConfig {
        systems: args.systems as usize,
        steps: args.steps as usize,
        seed: args.seed,
        perturbations: args.perturbations,
    };
    let report = verify_linear(&config)?;
    println!(
        "verify: {} systems x {} steps x alpha {{0.5, 1, 1.5, 3}}",
        report.systems, report.steps
    );
    for (name, value, tol, ok) in report.checks() {
        println!(
            "  [{}] {name:<36} {value:>12.3e}  (limit {tol:.0e})",
            if ok { "pass" } else { "FAIL" }
        );
    }
    println!(
        "  one-step UKF gain gap (expected nonzero): {:.3e}",
        report.ukf1_gain_gap
    );
    println!(
        "  tr P(ukf1) <= tr P(kf) held on {} of {} steps",
        report.trace_le_count,
        report.trace_le_count + report.trace_gt_count
    );
    Ok(report.passed())
}

/// Default configurations written by `reproduce`.
pub fn reproduce_configs(out_dir: &std::path::Path, seed: Option<u64>) -> Vec<ExperimentConfig> {
    [SystemId::Vdp, SystemId::Lorenz]
        .into_iter()
        .map(|system| {
            let mut c = ExperimentConfig::defaults(system);
            if let Some(s) = seed {
                c.seed = s;
            }
            c.out = Some(out_dir.join(format!("{}.csv", system.name())));
            c
        })
        .collect()
}

fn reproduce(args: ReproduceArgs) -> Result<(), Error> {
    std::fs::create_dir_all(&args.out_dir).map_err(|source| Error::Io {
        path: args.out_dir.clone(),
        source,
    })?;
    for config in reproduce_configs(&args.out_dir, args.seed) {
        let experiment = run_experiment(&config)?;
        print_summary(config.system.name(), &experiment);
        let path = config.out.as_ref().expect("reproduce sets an output path");
        write_csv(&experiment, path)?;
        println!("  wrote {}", path.display());
    }
    Ok(())
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(*a).map(|_| EXIT_OK),
        Command::Verify(a) => verify(a).map(|ok| if ok { EXIT_OK } else { EXIT_VERIFY_FAILED }),
        Command::Reproduce(a) => reproduce(a).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
