//! Trajectory CSV, wind CSV and the report document. Every file is written to
//! a sibling temporary path and renamed into place, so failed runs leave no
//! partial output.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, IoError, PowerError};
use crate::nlp::{KktReport, SolveStatus};
use crate::ocp::{MissionSpec, SolveResult};
use crate::power::{battery_trace, power_and_cumulative_energy, BatteryParams, EfficiencySpec, MotorParams, Sample};
use crate::sim::EnergyReport;
use crate::wind::{wind_vector, WindModelParams};

/// Columns of the trajectory CSV, in order.
pub const TRAJECTORY_COLUMNS: [&str; 26] = [
    "t", "x1", "x2", "x3", "x4", "x5", "x6", "x7", "x8", "x9", "x10", "x11", "x12", "x13", "x14", "x15", "x16",
    "alpha1", "alpha2", "alpha3", "alpha4", "P_total_W", "E_cum_J", "i_bat_A", "v_bat_V", "soc_pct",
];

pub const WIND_COLUMNS: [&str; 4] = ["t", "wind_x", "wind_y", "wind_z"];

/// Thirteen significant digits, locale independent.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.12e}").expect("writing to a String cannot fail");
}

fn row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, v);
    }
    out.push('\n');
}

/// Renders the trajectory with its power and battery traces.
pub fn trajectory_csv(
    traj: &[Sample],
    eff: &EfficiencySpec,
    motor: &MotorParams,
    battery: &BatteryParams,
) -> Result<String, PowerError> {
    let (power, energy) = power_and_cumulative_energy(traj, eff, motor)?;
    let cell = battery_trace(traj, motor, battery)?;
    let mut out = TRAJECTORY_COLUMNS.join(",");
    out.push('\n');
    for (k, s) in traj.iter().enumerate() {
        let (i_bat, b) = cell[k];
        let values = std::iter::once(s.t)
            .chain(s.state.0)
            .chain(s.control.0)
            .chain([power[k], energy[k], i_bat, b.v_bat, b.soc]);
        row(&mut out, values);
    }
    Ok(out)
}

/// Wind velocity sampled at `rate` Hz over `[t0, tf]`, both ends included.
pub fn wind_csv(wind: &WindModelParams, t0: f64, tf: f64, rate: f64) -> String {
    let n = ((tf - t0) * rate).round().max(1.0) as usize;
    let mut out = WIND_COLUMNS.join(",");
    out.push('\n');
    for k in 0..=n {
        let t = t0 + (tf - t0) * k as f64 / n as f64;
        let w = wind_vector(t, wind);
        row(&mut out, [t, w[0], w[1], w[2]]);
    }
    out
}

/// What the report says about the run beyond the energies themselves.
#[derive(Debug, Clone, Copy)]
pub struct ReportContext<'a> {
    pub mission: &'a MissionSpec,
    pub wind: Option<&'a WindModelParams>,
    pub n_intervals: usize,
}

/// The energy report as a TOML document with a commented header.
pub fn report_document(report: &EnergyReport, ctx: &ReportContext) -> String {
    let mut out = header("Minimum-energy trajectory versus tracking baseline", ctx);
    out.push_str("# baseline: PD position loop over a PD attitude loop, minimum-jerk reference,\n");
    out.push_str("#   no wind feedforward (wind acts on the baseline only through feedback)\n");
    out.push_str("# optimal_final_error: open-loop replay of the nodal controls\n");
    out.push_str(&toml::to_string(report).expect("report is always representable"));
    out
}

/// Summary written by `plan`, which has no baseline to compare against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanSummary {
    pub e_optimal: f64,
    pub solver_status: SolveStatus,
    pub max_defect: f64,
    pub max_path_violation: f64,
    pub kkt: KktReport,
}

impl PlanSummary {
    pub fn of(result: &SolveResult) -> Self {
        Self {
            e_optimal: result.objective,
            solver_status: result.status,
            max_defect: result.max_defect,
            max_path_violation: result.max_path_violation,
            kkt: result.kkt,
        }
    }
}

fn header(title: &str, ctx: &ReportContext) -> String {
    let m = ctx.mission;
    let (a, b) = (m.x0.position(), m.xf.position());
    let mut out = format!("# {title}\n");
    let _ = writeln!(out, "# mission: [{}, {}, {}] -> [{}, {}, {}] m over [{}, {}] s", a[0], a[1], a[2], b[0], b[1], b[2], m.t0, m.tf);
    let _ = writeln!(out, "# collocation intervals: {}", ctx.n_intervals);
    let _ = writeln!(out, "# wind: {}", if ctx.wind.is_some() { "on" } else { "off" });
    out
}

pub fn plan_document(summary: &PlanSummary, ctx: &ReportContext) -> String {
    let mut out = header("Minimum-energy trajectory", ctx);
    out.push_str(&toml::to_string(summary).expect("summary is always representable"));
    out
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |context, source| IoError { context, path: path.to_owned(), source };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| err("cannot create output directory", e))?;
    }
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(name);
    let written = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(bytes)?;
        f.sync_all()
    });
    if let Err(e) = written {
        let _ = fs::remove_file(&tmp);
        return Err(err("cannot write output file", e));
    }
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err("cannot move output file into place", e)
    })
}

pub fn write_trajectory_csv(
    traj: &[Sample],
    eff: &EfficiencySpec,
    motor: &MotorParams,
    battery: &BatteryParams,
    path: &Path,
) -> Result<(), Error> {
    let text = trajectory_csv(traj, eff, motor, battery)?;
    write_atomic(path, text.as_bytes())?;
    Ok(())
}
