use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ghmc_cli::spec::{ExperimentKind, ExperimentSpec, Overrides};
use ghmc_cli::{run_experiment, CliError};
use ghmc_core::bounds::Regime;

/// Batch experiments for generalized Hamiltonian Monte Carlo.
///
/// Settings are resolved in this order: built-in defaults for the
/// subcommand, then the --config file, then the remaining flags. The output
/// directory is --out, else `output.dir` from the config, else
/// `$GHMC_OUT_ROOT/<name>`, else `ghmc-out/<name>`.
///
/// Exit status: 0 on success, 1 if a hard assertion failed or a grid cell
/// errored, 2 on invalid configuration or unwritable output.
#[derive(Parser, Debug)]
#[command(name = "ghmc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run chains on every grid cell and record their iterates.
    Sample(Common),
    /// Exact step-size scan on a quadratic target, or a dimension scan with --dims.
    Scan(Common),
    /// Entropy bound against exact relative entropy (quadratic targets).
    Bounds(Common),
    /// Integrator checks: reversibility, volume, Jacobian and defect bounds.
    Verify(Common),
    /// Monte Carlo drift fit of the Lyapunov function.
    Drift(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment file (TOML, or JSON with a .json extension).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Step sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    grid_delta: Option<Vec<f64>>,
    /// Fix the physical time T; K follows from each step size.
    #[arg(long = "fix-T")]
    fix_t: Option<f64>,
    /// Fix the friction gamma; eta = 1 - gamma T.
    #[arg(long)]
    fix_gamma: Option<f64>,
    /// Step-size scaling for dimension scans and complexity plans.
    #[arg(long, value_parser = parse_regime)]
    regime: Option<Regime>,
    /// Dimensions, comma separated (turns `scan` into a dimension scan).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Iterations per chain.
    #[arg(long)]
    n_iters: Option<usize>,
}

fn parse_regime(s: &str) -> Result<Regime, String> {
    match s {
        "general" => Ok(Regime::General),
        "meanfield" | "mean_field" | "weakly_interacting" => Ok(Regime::WeaklyInteracting),
        _ => Err(format!("unknown regime {s:?}, expected general or meanfield")),
    }
}

fn kinds_for(cmd: &Command) -> (&Common, &'static [ExperimentKind]) {
    match cmd {
        Command::Sample(c) => (c, &[ExperimentKind::Sample]),
        Command::Scan(c) => (c, &[ExperimentKind::StepsizeScan, ExperimentKind::DimScan]),
        Command::Bounds(c) => (c, &[ExperimentKind::BoundCheck]),
        Command::Verify(c) => (c, &[ExperimentKind::VerifyIntegrator]),
        Command::Drift(c) => (c, &[ExperimentKind::DriftCheck]),
    }
}

fn resolve(cmd: &Command) -> Result<ExperimentSpec, CliError> {
    let (common, kinds) = kinds_for(cmd);
    let wants_dims = common.dims.is_some();
    let mut spec = match &common.config {
        Some(path) => {
            let spec = ExperimentSpec::from_file(path)?;
            if !kinds.contains(&spec.kind) {
                return Err(CliError::Config(format!(
                    "{}: kind {} does not belong to this subcommand",
                    path.display(),
                    spec.kind.as_str()
                )));
            }
            spec
        }
        None if wants_dims && kinds.contains(&ExperimentKind::DimScan) => {
            ExperimentSpec::default_for(ExperimentKind::DimScan)
        }
        None => ExperimentSpec::default_for(kinds[0]),
    };
    if wants_dims && spec.kind == ExperimentKind::StepsizeScan {
        spec.kind = ExperimentKind::DimScan;
    }
    spec.apply(&Overrides {
        seed: common.seed,
        out: common.out.clone(),
        grid_delta: common.grid_delta.clone(),
        fix_t: common.fix_t,
        fix_gamma: common.fix_gamma,
        regime: common.regime,
        dims: common.dims.clone(),
        n_iters: common.n_iters,
    });
    Ok(spec)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let spec = match resolve(&cli.command) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&spec) {
        Ok(outcome) => {
            println!(
                "{} cells, {} failed, artifacts in {}",
                outcome.cells,
                outcome.failed_cells,
                outcome.dir.display()
            );
            for a in &outcome.failed_assertions {
                println!("FAILED {a}");
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
