//! Forward simulation, the tracking-controller baseline and the energy
//! comparison.

use log::{debug, info, warn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, SimError};
use crate::model::{dynamics_rhs, idx, inverse_mix, AuxControl, State16, Wrench, STATE_DIM};
use crate::nlp::{SolveStatus, SolverSettings};
use crate::ocp::{
    solve_ocp, transcribe, CollocationGrid, MissionSpec, SolveResult, Vehicle, DEFAULT_CLAMP_WIDTH,
    DEFAULT_CONTROL_SMOOTHING,
};
use crate::par;
use crate::power::{battery_trace, trajectory_energy, EfficiencySpec, Sample};
use crate::wind::{wind_at, WindModelParams};

/// States larger than this in magnitude abort a rollout.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Update period of the baseline controller (s).
pub const CONTROL_PERIOD: f64 = 0.01;
/// Baseline final position errors above this are flagged in the report (m).
pub const BASELINE_ERROR_LIMIT: f64 = 0.3;

/// One classical Runge-Kutta step of `x' = f(t, x)`.
pub fn rk4_step<const N: usize>(f: impl Fn(f64, &[f64; N]) -> [f64; N], t: f64, x: &[f64; N], h: f64) -> [f64; N] {
    let axpy = |a: &[f64; N], k: &[f64; N], s: f64| std::array::from_fn(|i| a[i] + s * k[i]);
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &axpy(x, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &axpy(x, &k2, 0.5 * h));
    let k4 = f(t + h, &axpy(x, &k3, h));
    std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
}

#[derive(Debug, Clone)]
pub struct Rollout {
    pub samples: Vec<Sample>,
    /// Number of rotor-speed clamps applied after steps.
    pub saturations: usize,
}

impl Rollout {
    pub fn final_state(&self) -> &State16 {
        &self.samples.last().expect("rollout has samples").state
    }
}

/// Integrates the closed loop from `t0` to `tf` with fixed step `dt` (the
/// last step is shortened to land on `tf`). The control is sampled once per
/// step at its start and held; wind is evaluated at every stage.
pub fn rk4_rollout<C>(
    x_init: &State16,
    mut control: C,
    wind: Option<&WindModelParams>,
    vehicle: &Vehicle,
    t0: f64,
    tf: f64,
    dt: f64,
) -> Result<Rollout, SimError>
where
    C: FnMut(f64, &State16) -> Result<AuxControl, SimError>,
{
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::InvalidStep(dt));
    }
    let p = &vehicle.params;
    let gain = vehicle.wind_gain;
    let w_max = vehicle.limits.omega_max;
    let steps = ((tf - t0) / dt - 1e-9).ceil().max(0.0) as usize;
    let mut samples = Vec::with_capacity(steps + 1);
    let mut state = *x_init;
    let mut saturations = 0;

    let sample_control = |control: &mut C, t: f64, s: &State16| -> Result<AuxControl, SimError> {
        let u = control(t, s)?;
        if u.0.iter().all(|v| v.is_finite()) {
            Ok(u)
        } else {
            Err(SimError::NonFiniteControl(t))
        }
    };

    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let h = dt.min(tf - t);
        let u = sample_control(&mut control, t, &state)?;
        samples.push(Sample { t, state, control: u });
        let rhs = |ts: f64, x: &[f64; STATE_DIM]| dynamics_rhs(&State16(*x), &u, wind_at(ts, wind), gain, p).0;
        state = State16(rk4_step(rhs, t, &state.0, h));
        for w in &mut state.0[idx::W1..=idx::W4] {
            if *w < 0.0 || *w > w_max {
                *w = w.clamp(0.0, w_max);
                saturations += 1;
            }
        }
        if state.0.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
            return Err(SimError::Diverged { t: t + h, limit: DIVERGENCE_LIMIT });
        }
    }
    let u = sample_control(&mut control, tf, &state)?;
    samples.push(Sample { t: tf, state, control: u });
    if saturations > 0 {
        info!("rollout clamped rotor speeds {saturations} times");
    }
    Ok(Rollout { samples, saturations })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineGains {
    pub kp_pos: f64,
    pub kd_pos: f64,
    pub kp_att: f64,
    pub kd_att: f64,
}

impl Default for BaselineGains {
    fn default() -> Self {
        Self { kp_pos: 2.0, kd_pos: 2.5, kp_att: 60.0, kd_att: 15.0 }
    }
}

impl BaselineGains {
    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in
            [("kp_pos", self.kp_pos), ("kd_pos", self.kd_pos), ("kp_att", self.kp_att), ("kd_att", self.kd_att)]
        {
            if !(v.is_finite() && v > 0.0) {
                return Err((name, format!("must be > 0, got {v}")));
            }
        }
        if self.kp_att < 25.0 * self.kp_pos {
            return Err(("kp_att", format!("must be at least 25 * kp_pos = {}", 25.0 * self.kp_pos)));
        }
        Ok(())
    }
}

/// Quintic minimum-jerk blend `10 s^3 - 15 s^4 + 6 s^5` and its first two
/// time derivatives, for `t` clamped to the horizon.
pub fn min_jerk_profile(t: f64, t0: f64, tf: f64) -> (f64, f64, f64) {
    let dur = tf - t0;
    let s = ((t - t0) / dur).clamp(0.0, 1.0);
    let (s2, s3) = (s * s, s * s * s);
    let pos = 10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2;
    let vel = (30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2) / dur;
    let acc = (60.0 * s - 180.0 * s2 + 120.0 * s3) / (dur * dur);
    (pos, vel, acc)
}

/// Reference position, velocity, acceleration and yaw with yaw rate.
fn reference(t: f64, m: &MissionSpec) -> ([f64; 3], [f64; 3], [f64; 3], f64, f64) {
    let (s, sd, sdd) = min_jerk_profile(t, m.t0, m.tf);
    let (a, b) = (m.x0.position(), m.xf.position());
    let pos = std::array::from_fn(|i| a[i] + s * (b[i] - a[i]));
    let vel = std::array::from_fn(|i| sd * (b[i] - a[i]));
    let acc = std::array::from_fn(|i| sdd * (b[i] - a[i]));
    let (y0, y1) = (m.x0.0[idx::PSI], m.xf.0[idx::PSI]);
    (pos, vel, acc, y0 + s * (y1 - y0), sd * (y1 - y0))
}

/// Cascaded PD tracking of the minimum-jerk reference. Returns the rotor
/// accelerations that drive the rotors to the commanded speeds within one
/// control period.
pub fn baseline_controller(
    t: f64,
    s: &State16,
    mission: &MissionSpec,
    gains: &BaselineGains,
    vehicle: &Vehicle,
) -> Result<AuxControl, SimError> {
    let p = &vehicle.params;
    let x = &s.0;
    let (r, rd, rdd, yaw_ref, yaw_rate_ref) = reference(t, mission);
    let (pos, vel) = (s.position(), s.velocity());
    let force: [f64; 3] = std::array::from_fn(|i| {
        let gravity = if i == 2 { p.g } else { 0.0 };
        p.m * (rdd[i] + gains.kp_pos * (r[i] - pos[i]) + gains.kd_pos * (rd[i] - vel[i]) + gravity)
    });
    let magnitude = force.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(magnitude > 0.0) {
        return Err(SimError::CascadeInvalid { t, thrust: magnitude });
    }
    let (spsi, cpsi) = x[idx::PSI].sin_cos();
    let phi_des = ((force[0] * spsi - force[1] * cpsi) / magnitude).clamp(-1.0, 1.0).asin();
    let theta_des = (force[0] * cpsi + force[1] * spsi).atan2(force[2]);

    let (sphi, cphi) = x[idx::PHI].sin_cos();
    let (sth, cth) = x[idx::THETA].sin_cos();
    let body_z = [cphi * sth * cpsi + sphi * spsi, cphi * sth * spsi - sphi * cpsi, cphi * cth];
    let thrust: f64 = force.iter().zip(body_z).map(|(f, b)| f * b).sum();
    if !(thrust > 0.0) {
        return Err(SimError::CascadeInvalid { t, thrust });
    }

    let att = |err: f64, rate_err: f64| gains.kp_att * err + gains.kd_att * rate_err;
    let wrench = Wrench {
        u1: thrust,
        u2: p.ix * att(phi_des - x[idx::PHI], -x[idx::PHIDOT]),
        u3: p.iy * att(theta_des - x[idx::THETA], -x[idx::THETADOT]),
        u4: p.iz * att(yaw_ref - x[idx::PSI], yaw_rate_ref - x[idx::PSIDOT]),
    };
    let w_max = vehicle.limits.omega_max;
    let a_max = vehicle.limits.alpha_max;
    let squares = inverse_mix(&wrench, p);
    let w = s.rotor_speeds();
    Ok(AuxControl(std::array::from_fn(|j| {
        let target = squares[j].clamp(0.0, w_max * w_max).sqrt();
        ((target - w[j]) / CONTROL_PERIOD).clamp(-a_max, a_max)
    })))
}

/// Interpolation of nodal controls between collocation nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlHold {
    /// Piecewise constant at the value of the left node.
    #[default]
    Zoh,
    /// Piecewise linear between nodes.
    Foh,
}

/// Nodal control at time `t` under the given hold.
pub fn interpolate_control(nodes: &[Sample], t: f64, hold: ControlHold) -> AuxControl {
    let last = nodes.len() - 1;
    let k = nodes.partition_point(|s| s.t <= t + 1e-12).saturating_sub(1).min(last);
    match hold {
        ControlHold::Zoh => nodes[k].control,
        ControlHold::Foh => {
            if k == last {
                return nodes[last].control;
            }
            let (a, b) = (&nodes[k], &nodes[k + 1]);
            let f = ((t - a.t) / (b.t - a.t)).clamp(0.0, 1.0);
            AuxControl(std::array::from_fn(|j| a.control.0[j] + f * (b.control.0[j] - a.control.0[j])))
        }
    }
}

/// Re-integrates nodal controls open loop from the first node's state.
/// Under first-order hold each step uses the interpolated value at its
/// midpoint, which is exact for the rotor-speed channels.
pub fn open_loop_replay(
    nodes: &[Sample],
    vehicle: &Vehicle,
    wind: Option<&WindModelParams>,
    dt: f64,
    hold: ControlHold,
) -> Result<Rollout, SimError> {
    let (t0, tf) = (nodes[0].t, nodes[nodes.len() - 1].t);
    let control = |t: f64, _: &State16| {
        let at = match hold {
            ControlHold::Zoh => t,
            ControlHold::Foh => (t + 0.5 * dt).min(tf),
        };
        Ok(interpolate_control(nodes, at, hold))
    };
    rk4_rollout(&nodes[0].state, control, wind, vehicle, t0, tf, dt)
}

/// Closed-loop baseline flight of the mission at the controller rate.
pub fn simulate_baseline(
    mission: &MissionSpec,
    vehicle: &Vehicle,
    wind: Option<&WindModelParams>,
    gains: &BaselineGains,
) -> Result<Rollout, SimError> {
    let control = |t: f64, s: &State16| baseline_controller(t, s, mission, gains, vehicle);
    rk4_rollout(&mission.x0, control, wind, vehicle, mission.t0, mission.tf, CONTROL_PERIOD)
}

/// `100 (e_baseline - e_optimal) / e_baseline`, or `None` when the baseline
/// energy is not positive.
pub fn savings_percent(e_baseline: f64, e_optimal: f64) -> Option<f64> {
    (e_baseline > 0.0).then(|| 100.0 * (e_baseline - e_optimal) / e_baseline)
}

/// Everything that defines one planning/comparison run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub mission: MissionSpec,
    pub vehicle: Vehicle,
    pub wind: Option<WindModelParams>,
    pub efficiency: EfficiencySpec,
    pub n_intervals: usize,
    pub solver: SolverSettings,
    pub gains: BaselineGains,
    pub hold: ControlHold,
    /// Weight of the rotor-acceleration smoothing term (J s^3).
    pub control_smoothing: f64,
    /// Width of the smoothed braking clamp in the program objective (N m).
    pub clamp_width: f64,
}

impl Scenario {
    pub fn new(mission: MissionSpec, vehicle: Vehicle) -> Self {
        Self {
            mission,
            vehicle,
            wind: None,
            efficiency: EfficiencySpec::default(),
            n_intervals: 100,
            solver: SolverSettings::default(),
            gains: BaselineGains::default(),
            hold: ControlHold::default(),
            control_smoothing: DEFAULT_CONTROL_SMOOTHING,
            clamp_width: DEFAULT_CLAMP_WIDTH,
        }
    }
}

/// Transcribes and solves the scenario's optimal control problem. A solve
/// that does not converge is returned as is; callers decide.
pub fn plan(sc: &Scenario) -> Result<SolveResult, Error> {
    let grid = CollocationGrid::new(sc.n_intervals, sc.mission.t0, sc.mission.tf)?;
    let ocp = transcribe(&sc.mission, &grid, &sc.vehicle, sc.wind.as_ref(), &sc.efficiency)?
        .with_control_smoothing(sc.control_smoothing)
        .with_clamp_width(sc.clamp_width);
    let result = solve_ocp(&ocp, &sc.solver);
    info!(
        "solve finished: {} after {} inner iterations, energy {:.6} J, max defect {:.3e}",
        result.status, result.kkt.iterations, result.objective, result.max_defect
    );
    Ok(result)
}

/// Final-state error of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalError {
    /// Euclidean position error (m).
    pub position: f64,
    /// Euclidean velocity error (m/s).
    pub velocity: f64,
    /// Largest per-axis position error (m).
    pub position_max_axis: f64,
}

impl FinalError {
    pub fn between(actual: &State16, target: &State16) -> Self {
        let (a, b) = (actual.position(), target.position());
        let (va, vb) = (actual.velocity(), target.velocity());
        let dp: Vec<f64> = (0..3).map(|i| a[i] - b[i]).collect();
        Self {
            position: dp.iter().map(|d| d * d).sum::<f64>().sqrt(),
            velocity: (0..3).map(|i| (va[i] - vb[i]).powi(2)).sum::<f64>().sqrt(),
            position_max_axis: dp.iter().fold(0.0, |m, d| m.max(d.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub e_optimal: f64,
    pub e_baseline: f64,
    pub savings_percent: Option<f64>,
    pub solver_status: SolveStatus,
    /// Open-loop replay of the optimal controls.
    pub optimal_final_error: FinalError,
    pub baseline_final_error: FinalError,
    /// Set when the baseline misses the target by more than the flag limit.
    pub baseline_error_exceeded: bool,
    pub baseline_saturations: usize,
    pub soc_final_optimal: f64,
    pub soc_final_baseline: f64,
    #[serde(skip)]
    pub soc_optimal: Vec<(f64, f64)>,
    #[serde(skip)]
    pub soc_baseline: Vec<(f64, f64)>,
}

/// Both trajectories and the report built from them.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub report: EnergyReport,
    pub optimal: SolveResult,
    pub baseline: Rollout,
}

fn soc_trace(traj: &[Sample], vehicle: &Vehicle) -> Result<Vec<(f64, f64)>, Error> {
    let trace = battery_trace(traj, &vehicle.motor, &vehicle.battery)?;
    Ok(traj.iter().zip(trace).map(|(s, (_, b))| (s.t, b.soc)).collect())
}

/// Solves the optimal problem and flies the baseline (concurrently), then
/// evaluates both with the same energy functional.
pub fn compare_energy(sc: &Scenario) -> Result<Comparison, Error> {
    sc.gains.validate().map_err(|(key, reason)| crate::error::ConfigError::Invalid {
        key: format!("baseline.{key}"),
        reason,
    })?;
    let (optimal, baseline) = par::join(|| plan(sc), || simulate_baseline(&sc.mission, &sc.vehicle, sc.wind.as_ref(), &sc.gains));
    let optimal = optimal?;
    let baseline = baseline?;
    if optimal.status != SolveStatus::Converged {
        return Err(Error::NotConverged {
            status: optimal.status.to_string(),
            eq_violation: optimal.kkt.eq_violation,
        });
    }

    let e_optimal = trajectory_energy(&optimal.trajectory, &sc.efficiency, &sc.vehicle.motor)?;
    let e_baseline = trajectory_energy(&baseline.samples, &sc.efficiency, &sc.vehicle.motor)?;
    let h = (sc.mission.tf - sc.mission.t0) / sc.n_intervals as f64;
    let replay = open_loop_replay(&optimal.trajectory, &sc.vehicle, sc.wind.as_ref(), h / 10.0, sc.hold)?;
    let optimal_final_error = FinalError::between(replay.final_state(), &sc.mission.xf);
    let baseline_final_error = FinalError::between(baseline.final_state(), &sc.mission.xf);
    let baseline_error_exceeded = baseline_final_error.position > BASELINE_ERROR_LIMIT;
    if baseline_error_exceeded {
        warn!("baseline final position error {:.3} m exceeds {BASELINE_ERROR_LIMIT} m", baseline_final_error.position);
    }
    let soc_optimal = soc_trace(&optimal.trajectory, &sc.vehicle)?;
    let soc_baseline = soc_trace(&baseline.samples, &sc.vehicle)?;
    let savings = savings_percent(e_baseline, e_optimal);
    debug!("energies: optimal {e_optimal:.6} J, baseline {e_baseline:.6} J, savings {savings:?}");

    let report = EnergyReport {
        e_optimal,
        e_baseline,
        savings_percent: savings,
        solver_status: optimal.status,
        optimal_final_error,
        baseline_final_error,
        baseline_error_exceeded,
        baseline_saturations: baseline.saturations,
        soc_final_optimal: soc_optimal.last().map_or(100.0, |s| s.1),
        soc_final_baseline: soc_baseline.last().map_or(100.0, |s| s.1),
        soc_optimal,
        soc_baseline,
    };
    Ok(Comparison { report, optimal, baseline })
}
