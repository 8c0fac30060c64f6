//! Rotor power, trajectory energy, and battery state tracing.
//!
//! Mechanical power per rotor is `(Ir alpha + kappa w^2) w / f_r(alpha, w)`,
//! clamped at zero: the drivetrain does not regenerate.

use serde::{Deserialize, Serialize};

use crate::error::PowerError;
use crate::model::{AuxControl, State16};

/// Seconds per hour, for A h bookkeeping.
const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorParams {
    /// Winding resistance (ohm).
    pub r: f64,
    /// Torque constant (N m/A).
    pub kt: f64,
    /// Speed constant (rad/s/V).
    pub kv: f64,
    /// Rotor inertia (kg m^2).
    pub ir: f64,
    /// Propeller drag coefficient (N m s^2/rad^2).
    pub kappa: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EfficiencyMode {
    Constant,
    Polynomial,
}

/// Drivetrain efficiency `f_r(alpha, w)`, always clamped to `[clamp_floor, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencySpec {
    pub mode: EfficiencyMode,
    pub constant_value: f64,
    /// `poly_coeffs[i][j]` multiplies `alpha^i * w^j`.
    pub poly_coeffs: Vec<Vec<f64>>,
    pub clamp_floor: f64,
}

impl Default for EfficiencySpec {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

impl EfficiencySpec {
    pub fn constant(value: f64) -> Self {
        Self {
            mode: EfficiencyMode::Constant,
            constant_value: value,
            poly_coeffs: Vec::new(),
            clamp_floor: 0.05,
        }
    }

    pub fn polynomial(coeffs: Vec<Vec<f64>>) -> Self {
        Self { mode: EfficiencyMode::Polynomial, poly_coeffs: coeffs, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.clamp_floor > 0.0 && self.clamp_floor <= 1.0) {
            return Err(format!("clamp_floor must lie in (0, 1], got {}", self.clamp_floor));
        }
        match self.mode {
            EfficiencyMode::Constant => {
                if !(self.constant_value > 0.0 && self.constant_value <= 1.0) {
                    return Err(format!(
                        "constant_value must lie in (0, 1], got {}",
                        self.constant_value
                    ));
                }
            }
            EfficiencyMode::Polynomial => {
                if self.poly_coeffs.is_empty() {
                    return Err("polynomial mode needs poly_coeffs".into());
                }
                if self.poly_coeffs.iter().flatten().any(|c| !c.is_finite()) {
                    return Err("poly_coeffs must be finite".into());
                }
            }
        }
        Ok(())
    }

    /// Efficiency and its partial derivatives `(f, df/dalpha, df/dw)`.
    /// Derivatives vanish where the clamp is active.
    pub fn eval_with_grad(&self, alpha: f64, w: f64) -> (f64, f64, f64) {
        let (raw, da, dw) = match self.mode {
            EfficiencyMode::Constant => (self.constant_value, 0.0, 0.0),
            EfficiencyMode::Polynomial => {
                let (mut f, mut da, mut dw) = (0.0, 0.0, 0.0);
                let mut ai = 1.0;
                let mut ai_prev = 0.0;
                for (i, row) in self.poly_coeffs.iter().enumerate() {
                    let mut wj = 1.0;
                    let mut wj_prev = 0.0;
                    for (j, c) in row.iter().enumerate() {
                        f += c * ai * wj;
                        da += c * i as f64 * ai_prev * wj;
                        dw += c * ai * j as f64 * wj_prev;
                        wj_prev = wj;
                        wj *= w;
                    }
                    ai_prev = ai;
                    ai *= alpha;
                }
                (f, da, dw)
            }
        };
        if raw < self.clamp_floor {
            (self.clamp_floor, 0.0, 0.0)
        } else if raw > 1.0 {
            (1.0, 0.0, 0.0)
        } else {
            (raw, da, dw)
        }
    }

    pub fn eval(&self, alpha: f64, w: f64) -> f64 {
        self.eval_with_grad(alpha, w).0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatteryParams {
    /// Capacity (A h).
    pub q_bat: f64,
    /// Internal resistance (ohm).
    pub r_bat: f64,
    /// Open-circuit voltage at full charge (V).
    pub e0: f64,
    /// Bias voltage (V).
    pub k: f64,
    /// Exponential voltage (V).
    pub c1: f64,
    /// Exponential capacity (1/(A h)).
    pub c2: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self { q_bat: 1.55, r_bat: 0.02, e0: 1.24, k: 2.92e-3, c1: 0.156, c2: 2.35 }
    }
}

impl BatteryParams {
    /// Open-circuit voltage after `drawn` A h.
    pub fn open_circuit_voltage(&self, drawn: f64) -> f64 {
        self.e0 - self.k * self.q_bat / (self.q_bat - drawn) + self.c1 * (-self.c2 * drawn).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatteryState {
    /// Integrated current (A h).
    pub charge_drawn: f64,
    /// State of charge (%).
    pub soc: f64,
    /// Terminal voltage (V).
    pub v_bat: f64,
    /// Open-circuit voltage (V).
    pub e_m: f64,
}

impl BatteryState {
    /// Cell state after `charge_drawn` A h while delivering `i_bat` A.
    pub fn at(charge_drawn: f64, i_bat: f64, p: &BatteryParams) -> Result<Self, PowerError> {
        if charge_drawn >= p.q_bat {
            return Err(PowerError::BatteryDepleted {
                drawn: charge_drawn,
                capacity: p.q_bat,
                t: f64::NAN,
            });
        }
        let e_m = p.open_circuit_voltage(charge_drawn);
        Ok(Self {
            charge_drawn,
            soc: 100.0 * (1.0 - charge_drawn / p.q_bat),
            v_bat: e_m - p.r_bat * i_bat,
            e_m,
        })
    }

    pub fn fresh(p: &BatteryParams) -> Self {
        Self::at(0.0, 0.0, p).expect("a full cell has charge remaining")
    }
}

/// One point of a time-stamped state/control trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: State16,
    pub control: AuxControl,
}

/// Steady-state motor torque (N m), current (A) and voltage (V).
pub fn motor_steady_state(
    omega: f64,
    omega_dot: f64,
    p: &MotorParams,
) -> Result<(f64, f64, f64), PowerError> {
    if p.kt == 0.0 {
        return Err(PowerError::ZeroTorqueConstant);
    }
    let torque = p.ir * omega_dot + p.kappa * omega * omega;
    let current = torque / p.kt;
    let voltage = p.r * current + omega / p.kv;
    Ok((torque, current, voltage))
}

/// Mechanical power of one rotor and its partials `(p, dp/dalpha, dp/dw)`.
pub fn rotor_power_with_grad(
    w: f64,
    alpha: f64,
    eff: &EfficiencySpec,
    p: &MotorParams,
) -> (f64, f64, f64) {
    let torque = p.ir * alpha + p.kappa * w * w;
    let shaft = torque * w;
    if shaft <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    let (f, df_da, df_dw) = eff.eval_with_grad(alpha, w);
    let d_shaft_da = p.ir * w;
    let d_shaft_dw = torque + 2.0 * p.kappa * w * w;
    let power = shaft / f;
    let dp_da = (d_shaft_da - power * df_da) / f;
    let dp_dw = (d_shaft_dw - power * df_dw) / f;
    (power, dp_da, dp_dw)
}

/// Like [`rotor_power_with_grad`] but with the braking clamp `max(0, tau)`
/// replaced by `(tau + sqrt(tau^2 + width^2)) / 2`, a smooth upper bound that
/// differs from the clamp by at most `width / 2` (N m). `width = 0` gives the
/// exact clamp.
pub fn smoothed_rotor_power_with_grad(
    w: f64,
    alpha: f64,
    eff: &EfficiencySpec,
    p: &MotorParams,
    width: f64,
) -> (f64, f64, f64) {
    if width <= 0.0 {
        return rotor_power_with_grad(w, alpha, eff, p);
    }
    let torque = p.ir * alpha + p.kappa * w * w;
    let root = torque.hypot(width);
    let soft = 0.5 * (torque + root);
    let d_soft = 0.5 * (1.0 + torque / root);
    let shaft = soft * w;
    let (f, df_da, df_dw) = eff.eval_with_grad(alpha, w);
    let d_shaft_da = d_soft * p.ir * w;
    let d_shaft_dw = soft + d_soft * 2.0 * p.kappa * w * w;
    let power = shaft / f;
    let dp_da = (d_shaft_da - power * df_da) / f;
    let dp_dw = (d_shaft_dw - power * df_dw) / f;
    (power, dp_da, dp_dw)
}

/// Total mechanical power over the four rotors (W).
pub fn power_integrand(w: [f64; 4], a: [f64; 4], eff: &EfficiencySpec, p: &MotorParams) -> f64 {
    (0..4).map(|j| rotor_power_with_grad(w[j], a[j], eff, p).0).sum()
}

fn sample_power(s: &Sample, eff: &EfficiencySpec, p: &MotorParams) -> f64 {
    power_integrand(s.state.rotor_speeds(), s.control.0, eff, p)
}

fn check_grid(traj: &[Sample]) -> Result<(), PowerError> {
    if traj.len() < 2 {
        return Err(PowerError::TooFewSamples(traj.len()));
    }
    match traj.windows(2).position(|w| !(w[1].t > w[0].t)) {
        Some(i) => Err(PowerError::NonMonotoneTime { index: i + 1 }),
        None => Ok(()),
    }
}

/// Instantaneous power and the running trapezoidal energy at every sample.
pub fn power_and_cumulative_energy(
    traj: &[Sample],
    eff: &EfficiencySpec,
    p: &MotorParams,
) -> Result<(Vec<f64>, Vec<f64>), PowerError> {
    check_grid(traj)?;
    let power: Vec<f64> = traj.iter().map(|s| sample_power(s, eff, p)).collect();
    let mut energy = Vec::with_capacity(traj.len());
    let mut acc = 0.0;
    energy.push(acc);
    for k in 1..traj.len() {
        acc += 0.5 * (traj[k].t - traj[k - 1].t) * (power[k] + power[k - 1]);
        energy.push(acc);
    }
    Ok((power, energy))
}

/// Trapezoidal quadrature of [`power_integrand`] along the trajectory (J).
pub fn trajectory_energy(
    traj: &[Sample],
    eff: &EfficiencySpec,
    p: &MotorParams,
) -> Result<f64, PowerError> {
    let (_, energy) = power_and_cumulative_energy(traj, eff, p)?;
    Ok(*energy.last().expect("grid has at least two samples"))
}

/// Advances the cell by `dt` seconds at constant current `i_bat`.
pub fn battery_step(
    bs: &BatteryState,
    i_bat: f64,
    dt: f64,
    p: &BatteryParams,
) -> Result<BatteryState, PowerError> {
    if !(dt > 0.0) {
        return Err(PowerError::InvalidStep(format!("dt must be > 0, got {dt}")));
    }
    BatteryState::at(bs.charge_drawn + i_bat * dt / SECONDS_PER_HOUR, i_bat, p)
}

/// Pack current drawn by all four motors at one sample (A). Braking torque
/// draws no current.
pub fn pack_current(s: &Sample, p: &MotorParams) -> Result<f64, PowerError> {
    let w = s.state.rotor_speeds();
    let mut total = 0.0;
    for j in 0..4 {
        let (_, i, _) = motor_steady_state(w[j], s.control.0[j], p)?;
        total += i.max(0.0);
    }
    Ok(total)
}

/// Battery current and state at every sample. Charge between samples uses the
/// mean of the endpoint currents; the terminal voltage uses the instantaneous
/// current.
pub fn battery_trace(
    traj: &[Sample],
    motor: &MotorParams,
    battery: &BatteryParams,
) -> Result<Vec<(f64, BatteryState)>, PowerError> {
    check_grid(traj)?;
    let currents = traj.iter().map(|s| pack_current(s, motor)).collect::<Result<Vec<_>, _>>()?;
    let mut out = Vec::with_capacity(traj.len());
    let mut state = BatteryState::at(0.0, currents[0], battery)?;
    out.push((currents[0], state));
    for k in 1..traj.len() {
        let dt = traj[k].t - traj[k - 1].t;
        let mean = 0.5 * (currents[k] + currents[k - 1]);
        let stepped = battery_step(&state, mean, dt, battery).map_err(|e| match e {
            PowerError::BatteryDepleted { drawn, capacity, .. } => {
                PowerError::BatteryDepleted { drawn, capacity, t: traj[k].t }
            }
            other => other,
        })?;
        state = BatteryState { v_bat: stepped.e_m - battery.r_bat * currents[k], ..stepped };
        out.push((currents[k], state));
    }
    Ok(out)
}
