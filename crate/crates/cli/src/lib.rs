//! Command-line entry points: `run`, `sweep`, and `compare-kalamiza`.
//!
//! Exit codes: 0 success, 1 rejected configuration or usage error,
//! 2 runtime failure (stability or convergence), 3 I/O failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use epsim_core::config::{
    load_config, validate_with, RobinVariant, SimulationConfig, ValidateOptions,
};
use epsim_core::error::{ConfigError, FieldError, SimError, SweepError, TransportError};
use epsim_core::field::{solve_field, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD};
use epsim_core::oracle::kalamiza_comparison;
use epsim_core::output::{write_kalamiza_outputs, write_run_output, write_sweep_outputs};
use epsim_core::sweep::{run_sweep, SweepAxis};
use epsim_core::transport::run_pulses;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser)]
#[command(name = "epsim", version, about = "Reversible-electroporation drug transport simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation from a config or manifest file.
    Run(RunArgs),
    /// Run one simulation per axis value and write a sweep report.
    Sweep(SweepArgs),
    /// Compare the transfer coefficient and a single-pulse run against
    /// the dual-porosity coefficient model.
    CompareKalamiza(CompareArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Config or manifest TOML file.
    config: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// Accept a dt above the stability bound; outputs are tagged unstable.
    #[arg(long)]
    allow_unstable: bool,
    /// Apply the drug-loss boundary signs exactly as printed in the
    /// source model (mass-gaining on the far faces).
    #[arg(long)]
    literal_robin: bool,
    /// Override the resealing constant, seconds.
    #[arg(long, value_name = "SECONDS")]
    tau: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Snapshot at the end of every pulse cycle in addition to any
    /// explicitly configured times.
    #[arg(long)]
    snapshot_every_cycle: bool,
    /// Export the converged potential, field, and conductivity grids.
    #[arg(long)]
    export_field: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Swept parameter: beta, permeability, or pulses.
    #[arg(long, value_parser = parse_axis)]
    axis: SweepAxis,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
    /// Worker threads for sweep members (defaults to the core count).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    s.parse()
}

struct CliFailure {
    code: i32,
    message: String,
}

impl From<ConfigError> for CliFailure {
    fn from(e: ConfigError) -> Self {
        let code = match &e {
            ConfigError::Io(_) => EXIT_IO,
            _ => EXIT_USAGE,
        };
        CliFailure { code, message: e.to_string() }
    }
}

impl From<FieldError> for CliFailure {
    fn from(e: FieldError) -> Self {
        CliFailure { code: EXIT_RUNTIME, message: e.to_string() }
    }
}

impl From<TransportError> for CliFailure {
    fn from(e: TransportError) -> Self {
        let code = match &e {
            TransportError::SnapshotTimeOutOfRange { .. } => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        };
        CliFailure { code, message: e.to_string() }
    }
}

impl From<SimError> for CliFailure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Config(c) => c.into(),
            SimError::Field(f) => f.into(),
            SimError::Transport(t) => t.into(),
        }
    }
}

impl From<SweepError> for CliFailure {
    fn from(e: SweepError) -> Self {
        let code = match &e {
            SweepError::EmptyValues => EXIT_USAGE,
            SweepError::Members(failures) => {
                if failures.iter().all(|(_, f)| f.is_validation()) {
                    EXIT_USAGE
                } else {
                    EXIT_RUNTIME
                }
            }
        };
        CliFailure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for CliFailure {
    fn from(e: std::io::Error) -> Self {
        CliFailure { code: EXIT_IO, message: e.to_string() }
    }
}

/// Parses arguments and executes; returns the process exit code.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let kind = e.kind();
            let _ = e.print();
            return if matches!(kind, ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                EXIT_OK
            } else {
                EXIT_USAGE
            };
        }
    };
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Sweep(args) => cmd_sweep(args),
        Command::CompareKalamiza(args) => cmd_compare_kalamiza(args),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
    }
}

/// Loads the config, applies the shared flag overrides, and resolves the
/// effective allow-unstable setting (flag or manifest provenance).
fn load_and_prepare(common: &CommonArgs) -> Result<(SimulationConfig, bool), CliFailure> {
    let loaded = load_config(&common.config)?;
    let mut config = loaded.config;
    if let Some(tau) = common.tau {
        config.electro.resealing_tau = tau;
    }
    if common.literal_robin {
        config.boundary.robin = RobinVariant::LiteralPaper;
    }
    let allow_unstable =
        common.allow_unstable || loaded.provenance.as_ref().is_some_and(|p| p.allow_unstable);
    Ok((config, allow_unstable))
}

fn cmd_run(args: RunArgs) -> Result<(), CliFailure> {
    let (mut config, allow_unstable) = load_and_prepare(&args.common)?;
    if args.snapshot_every_cycle {
        let mut times = config.snapshot_times.take().unwrap_or_default();
        for k in 0..config.pulses.pulse_count_pn {
            times.push(config.pulses.cycle_end(k));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        config.snapshot_times = Some(times);
    }
    let validated = validate_with(&config, ValidateOptions { allow_unstable })?;
    let field = solve_field(&validated, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD)?;
    let mut output = run_pulses(&validated, &field)?;
    if args.export_field {
        output.field_export = Some(field);
    }
    write_run_output(&output, &args.common.out)?;

    let last = output.ledger.final_record();
    println!(
        "run complete: t = {} s, ECS mass {:.6e}, ICS mass {:.6e}, boundary loss {:.6e}",
        last.time, last.ecs_mass, last.ics_mass, last.boundary_loss_cum
    );
    println!(
        "mass ledger residual {:.3e} (tolerance {:.1e}); {} snapshots; outputs in {}",
        output.ledger.max_residual(),
        output.manifest.conservation_tol,
        output.snapshots.len(),
        args.common.out.display()
    );
    if validated.is_unstable() {
        println!("warning: dt exceeds the stability bound; outputs are tagged unstable");
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Result<(), CliFailure> {
    let (config, allow_unstable) = load_and_prepare(&args.common)?;
    let opts = ValidateOptions { allow_unstable };
    let outcome = match args.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliFailure { code: EXIT_RUNTIME, message: e.to_string() })?
            .install(|| run_sweep(&config, args.axis, &args.values, opts)),
        None => run_sweep(&config, args.axis, &args.values, opts),
    }?;
    write_sweep_outputs(&outcome, &args.common.out)?;

    println!("sweep over {} ({} members):", outcome.report.axis.label(), outcome.report.members.len());
    for m in &outcome.report.members {
        println!(
            "  {} = {}: ICS mass {:.6e}, ECS mass {:.6e}, loss {:.6e}, CoV {:.4}",
            outcome.report.axis.label(),
            m.value,
            m.final_ics_mass,
            m.final_ecs_mass,
            m.final_boundary_loss,
            m.cov_cre
        );
    }
    println!("report in {}", args.common.out.display());
    Ok(())
}

fn cmd_compare_kalamiza(args: CompareArgs) -> Result<(), CliFailure> {
    let (config, allow_unstable) = load_and_prepare(&args.common)?;
    if config.pulses.pulse_count_pn != 1 {
        return Err(CliFailure {
            code: EXIT_USAGE,
            message: format!(
                "the coefficient comparison is defined for a single pulse; got pulses.count = {}",
                config.pulses.pulse_count_pn
            ),
        });
    }
    let validated = validate_with(&config, ValidateOptions { allow_unstable })?;
    let field = solve_field(&validated, DEFAULT_FIELD_TOL, DEFAULT_MAX_PICARD)?;
    let data = kalamiza_comparison(&validated, &field)?;
    write_kalamiza_outputs(&data, &args.common.out)?;

    println!(
        "model prefactor {:.6e} 1/s, dual-porosity prefactor {:.6e} 1/s",
        data.model_prefactor, data.kalamiza_prefactor
    );
    println!(
        "prefactor ratio {:.6}, max relative gap {:.4}; outputs in {}",
        data.comparison.prefactor_ratio,
        data.comparison.max_rel_gap,
        args.common.out.display()
    );
    Ok(())
}
