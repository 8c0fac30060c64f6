//! Command-line front end. `cli_main` returns the process exit code.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use log::{error, info};

use crate::config::{load_config, RunConfig};
use crate::error::{ConfigError, Error};
use crate::nlp::SolveStatus;
use crate::output::{
    plan_document, report_document, trajectory_csv, wind_csv, write_atomic, PlanSummary, ReportContext,
};
use crate::sim::{compare_energy, plan, simulate_baseline, Scenario};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const OPTIMAL_CSV: &str = "optimal.csv";
pub const BASELINE_CSV: &str = "baseline.csv";
pub const WIND_CSV: &str = "wind.csv";
pub const PLAN_REPORT: &str = "plan.toml";
pub const COMPARE_REPORT: &str = "report.toml";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Debug, Parser)]
#[command(name = "quad-energy", version, about = "Minimum-energy quadrotor trajectories under deterministic wind")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration merged over the built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides `wind.enabled`.
    #[arg(long, global = true)]
    wind: Option<Switch>,
    /// Overrides `grid.n_intervals`.
    #[arg(long, global = true, value_name = "N")]
    grid: Option<usize>,
    /// Overrides both solver feasibility tolerances.
    #[arg(long, global = true, value_name = "X")]
    tol: Option<f64>,
    /// Overrides `outputs.directory`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Accepted for compatibility; runs are always deterministic.
    #[arg(long, global = true)]
    seedless: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Solve the optimal control problem.
    Plan,
    /// Fly the tracking baseline.
    Simulate,
    /// Plan, fly the baseline, and compare energies.
    Compare,
    /// Sample the configured wind field.
    WindPreview,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => load_config(path)?,
            None => RunConfig::default(),
        };
        if let Some(w) = self.wind {
            cfg.wind.enabled = w == Switch::On;
        }
        if let Some(n) = self.grid {
            cfg.grid.n_intervals = n;
        }
        if let Some(tol) = self.tol {
            cfg.solver.eq_tol = tol;
            cfg.solver.ineq_tol = tol;
        }
        if let Some(dir) = &self.out {
            cfg.outputs.directory = dir.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NotConverged { .. } => EXIT_NOT_CONVERGED,
        Error::Io(_) => EXIT_IO,
        // Everything else traces back to inputs that describe an impossible run.
        Error::Config(_) | Error::Model(_) | Error::Power(_) | Error::Ocp(_) | Error::Sim(_) => EXIT_CONFIG,
    }
}

fn ctx<'a>(sc: &'a Scenario) -> ReportContext<'a> {
    ReportContext { mission: &sc.mission, wind: sc.wind.as_ref(), n_intervals: sc.n_intervals }
}

/// Renders everything first, then writes, so a late failure leaves nothing
/// behind from this run.
fn write_all(dir: &Path, files: &[(&str, String)]) -> Result<(), Error> {
    for (name, text) in files {
        let path = dir.join(name);
        write_atomic(&path, text.as_bytes())?;
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = cli.config()?;
    let dir = cfg.outputs.directory.clone();
    let sc = cfg.scenario()?;
    let v = &sc.vehicle;
    match cli.command {
        Command::Plan => {
            let result = plan(&sc)?;
            if result.status != SolveStatus::Converged {
                return Err(Error::NotConverged {
                    status: result.status.to_string(),
                    eq_violation: result.kkt.eq_violation,
                });
            }
            let csv = trajectory_csv(&result.trajectory, &sc.efficiency, &v.motor, &v.battery)?;
            let doc = plan_document(&PlanSummary::of(&result), &ctx(&sc));
            write_all(&dir, &[(OPTIMAL_CSV, csv), (PLAN_REPORT, doc)])
        }
        Command::Simulate => {
            let rollout = simulate_baseline(&sc.mission, v, sc.wind.as_ref(), &sc.gains)?;
            let csv = trajectory_csv(&rollout.samples, &sc.efficiency, &v.motor, &v.battery)?;
            write_all(&dir, &[(BASELINE_CSV, csv)])
        }
        Command::Compare => {
            let cmp = compare_energy(&sc)?;
            let optimal = trajectory_csv(&cmp.optimal.trajectory, &sc.efficiency, &v.motor, &v.battery)?;
            let baseline = trajectory_csv(&cmp.baseline.samples, &sc.efficiency, &v.motor, &v.battery)?;
            let doc = report_document(&cmp.report, &ctx(&sc));
            write_all(&dir, &[(OPTIMAL_CSV, optimal), (BASELINE_CSV, baseline), (COMPARE_REPORT, doc)])
        }
        Command::WindPreview => {
            let m = &sc.mission;
            let csv = wind_csv(&cfg.wind.model(), m.t0, m.tf, cfg.outputs.sample_rate);
            write_all(&dir, &[(WIND_CSV, csv)])
        }
    }
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
