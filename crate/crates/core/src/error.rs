use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("rotor speed must be non-negative, got {0}")]
    NegativeRotorSpeed(f64),
    #[error("{name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("motor torque constant must be non-zero")]
    ZeroTorqueConstant,
    #[error("time grid must be strictly increasing (sample {index})")]
    NonMonotoneTime { index: usize },
    #[error("trajectory needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("battery depleted: {drawn:.6} A h drawn of {capacity} A h at t = {t:.3} s")]
    BatteryDepleted { drawn: f64, capacity: f64, t: f64 },
    #[error("invalid battery step: {0}")]
    InvalidStep(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OcpError {
    #[error("collocation grid needs at least 2 intervals, got {0}")]
    GridTooCoarse(usize),
    #[error("final time {tf} must exceed initial time {t0}")]
    EmptyHorizon { t0: f64, tf: f64 },
    #[error("{which} boundary state infeasible: {source}")]
    InfeasibleBoundary {
        which: &'static str,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("step size must be positive, got {0}")]
    InvalidStep(f64),
    #[error("state diverged at t = {t:.4} s (|x| > {limit:e})")]
    Diverged { t: f64, limit: f64 },
    #[error("controller produced a non-finite control at t = {0:.4} s")]
    NonFiniteControl(f64),
    #[error("baseline cascade invalid at t = {t:.4} s: desired thrust {thrust} N is not positive")]
    CascadeInvalid { t: f64, thrust: f64 },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Debug, Error)]
#[error("{context} ({path}): {source}")]
pub struct IoError {
    pub context: &'static str,
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

/// Top-level error used by the reporting pipeline and the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Ocp(#[from] OcpError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("solver did not converge: status {status}, equality violation {eq_violation:e}")]
    NotConverged { status: String, eq_violation: f64 },
    #[error(transparent)]
    Io(#[from] IoError),
}
