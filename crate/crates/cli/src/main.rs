use std::path::Path;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};
use evqe_cli::config::{parse_distortion, parse_weights, GridSpec, ScanConfig};
use evqe_cli::{run_scan, write_outputs};
use evqe_core::evqe::SpinMode;
use evqe_core::pipeline::{DiabatizationRoute, Stage};
use evqe_core::resolve::Solver;
use evqe_core::scf::MoKind;

#[derive(Parser, Debug)]
#[command(name = "evqe", version, about = "Three-state ensemble VQE scans of H4+")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug, Clone)]
enum Command {
    /// FCI reference energies only.
    FciOnly(Flags),
    /// Ensemble VQE and eigenstate resolution.
    Adiabatic(Flags),
    /// Ensemble VQE and optimal diabatization.
    Diabatic(Flags),
    /// Every stage.
    Full(Flags),
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum MoArg {
    Canonical,
    Lowdin,
    Diabatic,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum SolverArg {
    Frobenius,
    TwoStep,
    Weighted,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum RouteArg {
    Rotation,
    Constrained,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum ModeArg {
    Penalty,
    Constrained,
}

#[derive(clap::Args, Debug, Clone, Default)]
struct Flags {
    /// TOML configuration file; flags below override it.
    #[arg(long)]
    config: Option<String>,
    /// Δz₁ grid: START:STOP:STEP, a comma list, or DX2,DY3,START:STOP:STEP.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum)]
    mo: Option<MoArg>,
    /// Reference distortion DX2,DY3,DZ1 for diabatic orbitals.
    #[arg(long)]
    ref_distortion: Option<String>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    /// Weights WA,WB,WC for the weighted solver.
    #[arg(long)]
    weights: Option<String>,
    #[arg(long, value_enum)]
    route: Option<RouteArg>,
    /// Spin handling in the ensemble optimization.
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
    /// Output directory (overrides EVQE_OUT).
    #[arg(long)]
    out: Option<String>,
    /// Seed each point from the previous point's parameters.
    #[arg(long)]
    warm_start: bool,
}

impl Command {
    fn split(self) -> (Stage, Flags) {
        match self {
            Command::FciOnly(f) => (Stage::FciOnly, f),
            Command::Adiabatic(f) => (Stage::Adiabatic, f),
            Command::Diabatic(f) => (Stage::Diabatic, f),
            Command::Full(f) => (Stage::Full, f),
        }
    }
}

fn build_config(f: &Flags) -> anyhow::Result<ScanConfig> {
    let mut c = match &f.config {
        Some(p) => ScanConfig::load(p.as_ref())?,
        None => ScanConfig::default(),
    };
    if let Some(g) = &f.grid {
        c.grid = GridSpec::parse(g)?;
    }
    if let Some(mo) = f.mo {
        c.pipeline.mo = match mo {
            MoArg::Canonical => MoKind::CanonicalRohf,
            MoArg::Lowdin => MoKind::Lowdin,
            MoArg::Diabatic => MoKind::Diabatic,
        };
    }
    if let Some(r) = &f.ref_distortion {
        c.pipeline.reference = parse_distortion(r)?;
    }
    let weights = f.weights.as_deref().map(parse_weights).transpose()?;
    match (f.solver, weights) {
        (Some(SolverArg::Frobenius), _) => c.pipeline.solver = Solver::Frobenius,
        (Some(SolverArg::TwoStep), _) => c.pipeline.solver = Solver::TwoStep,
        (Some(SolverArg::Weighted), w) => {
            c.pipeline.solver = Solver::Weighted {
                weights: w.unwrap_or([3.0, 2.0, 1.0]),
            }
        }
        (None, Some(w)) => c.pipeline.solver = Solver::Weighted { weights: w },
        (None, None) => {}
    }
    if let Some(r) = f.route {
        c.pipeline.route = match r {
            RouteArg::Rotation => DiabatizationRoute::Rotation,
            RouteArg::Constrained => DiabatizationRoute::Constrained,
        };
    }
    if let Some(m) = f.mode {
        c.pipeline.mode = match m {
            ModeArg::Penalty => SpinMode::Penalty { lambda: 1.0 },
            ModeArg::Constrained => SpinMode::Constrained { epsilon: 1e-8 },
        };
    }
    if let Some(j) = f.jobs {
        c.jobs = j;
    }
    if f.warm_start {
        c.warm_start = true;
    }
    c.validate()?;
    Ok(c)
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let (stage, flags) = cli.command.split();
    let config = build_config(&flags)?;
    let out = config.output_dir(flags.out.as_deref().map(Path::new));
    let report = run_scan(&config, stage)?;
    let files = write_outputs(&report, &out).with_context(|| format!("writing to {}", out.display()))?;
    let failed = report.n_failed();
    eprintln!(
        "{} points, {} flagged; {} files in {}",
        report.points.len(),
        failed,
        files.len(),
        out.display()
    );
    Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
