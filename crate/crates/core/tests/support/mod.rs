//! Shared fixtures: the Phantom 2 scenario and a double-integrator oracle with
//! a closed-form optimum.

#![allow(dead_code)]

use quad_energy::config::RunConfig;
use quad_energy::nlp::NlpProblem;
use quad_energy::sim::Scenario;

/// The default configuration's scenario: origin to [6, 7, 8] m in 10 s.
pub fn phantom_scenario(n_intervals: usize, wind: bool) -> Scenario {
    let mut cfg = RunConfig::default();
    cfg.grid.n_intervals = n_intervals;
    cfg.wind.enabled = wind;
    cfg.scenario().expect("defaults are valid")
}

/// `min int_0^1 u^2 dt` subject to `x'' = u`, `x(0) = 0`, `x(1) = 1` and zero
/// end velocities, transcribed with the trapezoid rule. The continuous optimum
/// is `u = 6 - 12 t` with cost 12.
pub struct DoubleIntegrator {
    pub n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DoubleIntegrator {
    pub const BOUND: f64 = 100.0;

    pub fn new(n: usize) -> Self {
        let len = 3 * (n + 1);
        Self { n, lower: vec![-Self::BOUND; len], upper: vec![Self::BOUND; len] }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn control(z: &[f64], k: usize) -> f64 {
        z[3 * k + 2]
    }

    pub fn exact_control(t: f64) -> f64 {
        6.0 - 12.0 * t
    }
}

impl NlpProblem for DoubleIntegrator {
    fn n_vars(&self) -> usize {
        3 * (self.n + 1)
    }

    fn n_eq(&self) -> usize {
        2 * self.n + 4
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let h = self.h();
        (0..self.n).map(|k| 0.5 * h * (Self::control(z, k).powi(2) + Self::control(z, k + 1).powi(2))).sum()
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        let h = self.h();
        for k in 0..=self.n {
            let w = if k == 0 || k == self.n { 0.5 * h } else { h };
            grad[3 * k + 2] = 2.0 * w * Self::control(z, k);
        }
    }

    /// Each defect touches two adjacent nodes of three variables.
    fn hessian_bandwidth(&self) -> Option<usize> {
        Some(5)
    }

    fn eq_constraints(&self, z: &[f64], out: &mut [f64]) {
        let h = self.h();
        for k in 0..self.n {
            let (a, b) = (&z[3 * k..3 * k + 3], &z[3 * k + 3..3 * k + 6]);
            out[2 * k] = b[0] - a[0] - 0.5 * h * (a[1] + b[1]);
            out[2 * k + 1] = b[1] - a[1] - 0.5 * h * (a[2] + b[2]);
        }
        let last = 3 * self.n;
        let m = 2 * self.n;
        out[m] = z[0];
        out[m + 1] = z[1];
        out[m + 2] = z[last] - 1.0;
        out[m + 3] = z[last + 1];
    }
}
