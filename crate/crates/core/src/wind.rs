//! Deterministic wind: per-axis mean, three harmonics, and a periodic gust.
//!
//! The harmonic frequencies are used directly as the sine argument
//! (`A_k sin(Omega_k t)`), i.e. in rad/s, even though tabulated values are
//! sometimes labelled Hz.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// One harmonic component, `amplitude * sin(omega * t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    /// Angular frequency used directly inside the sine (1/s).
    pub omega: f64,
    /// Amplitude (m/s). May be negative.
    pub amplitude: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindAxisParams {
    /// Mean wind speed (m/s).
    pub v0: f64,
    pub harmonics: [Harmonic; 3],
    /// Gust amplitude (m/s).
    pub v_gmax: f64,
    /// Gust period (s). The gust angular frequency is always `2 pi / t_g`.
    pub t_g: f64,
}

impl WindAxisParams {
    pub fn calm() -> Self {
        Self {
            v0: 0.0,
            harmonics: [Harmonic { omega: 0.0, amplitude: 0.0 }; 3],
            v_gmax: 0.0,
            t_g: 1.0,
        }
    }

    pub fn gust_frequency(&self) -> f64 {
        2.0 * PI / self.t_g
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.t_g.is_finite() && self.t_g > 0.0) {
            return Err(format!("t_g must be > 0, got {}", self.t_g));
        }
        let finite = self.v0.is_finite()
            && self.v_gmax.is_finite()
            && self.harmonics.iter().all(|h| h.omega.is_finite() && h.amplitude.is_finite());
        if !finite {
            return Err("wind parameters must be finite".into());
        }
        Ok(())
    }
}

/// Wind along the inertial x and y axes; the vertical component is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindModelParams {
    pub x_axis: WindAxisParams,
    pub y_axis: WindAxisParams,
}

impl WindModelParams {
    pub fn calm() -> Self {
        Self { x_axis: WindAxisParams::calm(), y_axis: WindAxisParams::calm() }
    }
}

impl Default for WindModelParams {
    /// Reference profile: X mean 1.0 m/s, Y mean 0.5 m/s, 0.2 m/s gust every 10 s.
    fn default() -> Self {
        let h = |omega, amplitude| Harmonic { omega, amplitude };
        Self {
            x_axis: WindAxisParams {
                v0: 1.0,
                harmonics: [h(0.5, 0.10), h(0.7, 0.25), h(1.0, 0.30)],
                v_gmax: 0.20,
                t_g: 10.0,
            },
            y_axis: WindAxisParams {
                v0: 0.5,
                harmonics: [h(0.6, -0.05), h(1.0, -0.10), h(1.5, -0.30)],
                v_gmax: 0.20,
                t_g: 10.0,
            },
        }
    }
}

/// Sigmoid-of-sine gust; peaks at exactly `v_gmax` once per period.
pub fn gust(t: f64, v_gmax: f64, t_g: f64) -> f64 {
    let phase = (2.0 * PI / t_g * t).sin();
    2.0 * v_gmax / (1.0 + (-4.0 * (phase - 1.0)).exp())
}

pub fn axis_wind(t: f64, p: &WindAxisParams) -> f64 {
    let harmonics: f64 = p.harmonics.iter().map(|h| h.amplitude * (h.omega * t).sin()).sum();
    p.v0 + harmonics + gust(t, p.v_gmax, p.t_g)
}

pub fn wind_vector(t: f64, p: &WindModelParams) -> [f64; 3] {
    [axis_wind(t, &p.x_axis), axis_wind(t, &p.y_axis), 0.0]
}

/// Wind lookup that treats `None` as calm air.
pub fn wind_at(t: f64, p: Option<&WindModelParams>) -> [f64; 3] {
    p.map_or([0.0; 3], |w| wind_vector(t, w))
}
