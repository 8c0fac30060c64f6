//! Run configuration: a TOML document merged over the built-in Phantom 2
//! setup.
//!
//! Every section and key is optional. Unknown keys are rejected. Each key the
//! file sets is logged at info level.

use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, ModelError};
use crate::model::{hover_speed, idx, Limits, QuadrotorParams, State16};
use crate::nlp::SolverSettings;
use crate::ocp::{MissionSpec, Vehicle, DEFAULT_CLAMP_WIDTH, DEFAULT_CONTROL_SMOOTHING};
use crate::power::{BatteryParams, EfficiencySpec, MotorParams};
use crate::sim::{BaselineGains, ControlHold, Scenario};
use crate::wind::{WindAxisParams, WindModelParams};

/// Electrical motor constants; inertia and drag come from `[vehicle]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotorConfig {
    pub r: f64,
    pub kt: f64,
    pub kv: f64,
}

impl Default for MotorConfig {
    fn default() -> Self {
        Self { r: 0.2, kt: 0.0104, kv: 96.342 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsConfig {
    pub omega_max: f64,
    pub alpha_max: f64,
    pub angle_max: f64,
    pub u_max: f64,
}

impl Default for LimitsConfig {
    fn default() -> Self {
        Self { omega_max: 1200.0, alpha_max: 4000.0, angle_max: std::f64::consts::FRAC_PI_2, u_max: 0.5 }
    }
}

/// A boundary state. `rotors` defaults to the hover speed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Roll, pitch, yaw (rad).
    pub attitude: [f64; 3],
    pub rates: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rotors: Option<[f64; 4]>,
}

impl BoundaryConfig {
    pub fn at(position: [f64; 3]) -> Self {
        Self { position, ..Self::default() }
    }

    pub fn state(&self, hover: f64) -> State16 {
        let mut s = State16::hover_at(self.position, hover);
        let v = self.velocity;
        let (a, r) = (self.attitude, self.rates);
        s.0[idx::XDOT] = v[0];
        s.0[idx::YDOT] = v[1];
        s.0[idx::ZDOT] = v[2];
        s.0[idx::PHI] = a[0];
        s.0[idx::THETA] = a[1];
        s.0[idx::PSI] = a[2];
        s.0[idx::PHIDOT] = r[0];
        s.0[idx::THETADOT] = r[1];
        s.0[idx::PSIDOT] = r[2];
        if let Some(w) = self.rotors {
            s.0[idx::W1..=idx::W4].copy_from_slice(&w);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MissionConfig {
    pub t0: f64,
    pub tf: f64,
    pub x0: BoundaryConfig,
    pub xf: BoundaryConfig,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self { t0: 0.0, tf: 10.0, x0: BoundaryConfig::at([0.0; 3]), xf: BoundaryConfig::at([6.0, 7.0, 8.0]) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindConfig {
    pub enabled: bool,
    /// Converts wind velocity into acceleration (1/s).
    pub gain: f64,
    pub x_axis: WindAxisParams,
    pub y_axis: WindAxisParams,
}

impl WindConfig {
    pub fn model(&self) -> WindModelParams {
        WindModelParams { x_axis: self.x_axis, y_axis: self.y_axis }
    }
}

impl Default for WindConfig {
    fn default() -> Self {
        let m = WindModelParams::default();
        Self { enabled: false, gain: 1.0, x_axis: m.x_axis, y_axis: m.y_axis }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_intervals: usize,
    /// Weight of the rotor-acceleration smoothing term (J s^3).
    pub control_smoothing: f64,
    /// Width of the smoothed braking clamp in the program objective (N m).
    pub clamp_width: f64,
    /// Hold used when replaying nodal controls.
    pub replay_hold: ControlHold,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_intervals: 100,
            control_smoothing: DEFAULT_CONTROL_SMOOTHING,
            clamp_width: DEFAULT_CLAMP_WIDTH,
            replay_hold: ControlHold::Foh,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    /// Sample rate of `wind-preview` (Hz).
    pub sample_rate: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), sample_rate: 20.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub vehicle: QuadrotorParams,
    pub motor: MotorConfig,
    pub battery: BatteryParams,
    pub efficiency: EfficiencySpec,
    pub limits: LimitsConfig,
    pub mission: MissionConfig,
    pub wind: WindConfig,
    pub grid: GridConfig,
    pub solver: SolverSettings,
    pub baseline: BaselineGains,
    pub outputs: OutputConfig,
}

fn invalid(key: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), reason: reason.into() }
}

fn positive(key: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be > 0, got {v}")))
    }
}

fn model_error(section: &str, e: ModelError) -> ConfigError {
    match e {
        ModelError::InvalidParameter { name, reason } => invalid(format!("{section}.{name}"), reason),
        ModelError::OutOfBounds { name, .. } => invalid(format!("{section}.{name}"), e.to_string()),
        other => invalid(section, other.to_string()),
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        log_overrides("", &table);
        let cfg: RunConfig =
            toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    pub fn limits(&self) -> Result<Limits, ConfigError> {
        let l = &self.limits;
        Limits::new(l.omega_max, l.alpha_max, l.angle_max, l.u_max, self.vehicle.kappa_b)
            .map_err(|e| model_error("limits", e))
    }

    pub fn vehicle(&self) -> Result<Vehicle, ConfigError> {
        let p = self.vehicle;
        Ok(Vehicle {
            params: p,
            motor: MotorParams { r: self.motor.r, kt: self.motor.kt, kv: self.motor.kv, ir: p.ir, kappa: p.kappa },
            battery: self.battery,
            limits: self.limits()?,
            wind_gain: self.wind.gain,
        })
    }

    pub fn mission(&self) -> MissionSpec {
        let wh = hover_speed(&self.vehicle);
        let m = &self.mission;
        MissionSpec { x0: m.x0.state(wh), xf: m.xf.state(wh), t0: m.t0, tf: m.tf }
    }

    pub fn wind_model(&self) -> Option<WindModelParams> {
        self.wind.enabled.then(|| self.wind.model())
    }

    /// Checks every invariant, naming the offending key.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.vehicle.validate().map_err(|e| model_error("vehicle", e))?;
        positive("motor.r", self.motor.r)?;
        positive("motor.kt", self.motor.kt)?;
        positive("motor.kv", self.motor.kv)?;
        let b = &self.battery;
        for (key, v) in [("battery.q_bat", b.q_bat), ("battery.e0", b.e0), ("battery.c2", b.c2)] {
            positive(key, v)?;
        }
        for (key, v) in [("battery.r_bat", b.r_bat), ("battery.k", b.k), ("battery.c1", b.c1)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(key, format!("must be >= 0, got {v}")));
            }
        }
        self.efficiency.validate().map_err(|r| invalid("efficiency", r))?;
        let limits = self.limits()?;
        let m = &self.mission;
        if !(m.t0.is_finite() && m.tf.is_finite() && m.tf > m.t0) {
            return Err(invalid("mission.tf", format!("must exceed t0 = {}, got {}", m.t0, m.tf)));
        }
        let mission = self.mission();
        mission.x0.validate(&limits).map_err(|e| invalid("mission.x0", e.to_string()))?;
        mission.xf.validate(&limits).map_err(|e| invalid("mission.xf", e.to_string()))?;
        positive("wind.gain", self.wind.gain)?;
        self.wind.x_axis.validate().map_err(|r| invalid("wind.x_axis", r))?;
        self.wind.y_axis.validate().map_err(|r| invalid("wind.y_axis", r))?;
        if self.grid.n_intervals < 2 {
            return Err(invalid("grid.n_intervals", format!("must be >= 2, got {}", self.grid.n_intervals)));
        }
        for (key, v) in [("grid.control_smoothing", self.grid.control_smoothing), ("grid.clamp_width", self.grid.clamp_width)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(key, format!("must be >= 0, got {v}")));
            }
        }
        self.solver.validate().map_err(|(k, r)| invalid(format!("solver.{k}"), r))?;
        self.baseline.validate().map_err(|(k, r)| invalid(format!("baseline.{k}"), r))?;
        positive("outputs.sample_rate", self.outputs.sample_rate)?;
        Ok(())
    }

    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.validate()?;
        let mut sc = Scenario::new(self.mission(), self.vehicle()?);
        sc.wind = self.wind_model();
        sc.efficiency = self.efficiency.clone();
        sc.n_intervals = self.grid.n_intervals;
        sc.solver = self.solver;
        sc.gains = self.baseline;
        sc.hold = self.grid.replay_hold;
        sc.control_smoothing = self.grid.control_smoothing;
        sc.clamp_width = self.grid.clamp_width;
        Ok(sc)
    }
}

fn log_overrides(prefix: &str, table: &toml::Table) {
    for (key, value) in table {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match value {
            toml::Value::Table(inner) => log_overrides(&path, inner),
            leaf => info!("config override: {path} = {leaf}"),
        }
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
    RunConfig::from_toml_str(&text)
}
