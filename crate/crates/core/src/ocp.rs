//! Trapezoidal direct collocation of the minimum-energy flight problem.
//!
//! The decision vector is node-major: for each of the `n_intervals + 1` grid
//! nodes it holds the 16 state entries followed by the 4 rotor accelerations.
//! Equality constraints are the `16 n_intervals` trapezoidal defects followed
//! by 32 boundary residuals; both are divided by the per-state scale so that
//! one tolerance fits every channel. Inequalities are the thrust and torque
//! limits at every node, normalized by the limit values.

use std::f64::consts::PI;

use crate::error::OcpError;
use crate::model::{
    dynamics_jacobian, dynamics_rhs, hover_speed, idx, mix, AuxControl, Limits, QuadrotorParams,
    State16, CONTROL_DIM, STATE_DIM,
};
use crate::nlp::{
    self, fd_directional, fd_gradient, inf_norm, KktReport, NlpProblem, Scaled, SolveStatus,
    SolverSettings, SparseMatrix,
};
use crate::par;
use crate::power::{
    rotor_power_with_grad, smoothed_rotor_power_with_grad, BatteryParams, EfficiencySpec, MotorParams, Sample,
};
use crate::wind::{wind_at, WindModelParams};

/// Variables per grid node.
pub const NODE_DIM: usize = STATE_DIM + CONTROL_DIM;
/// Inequality rows per grid node.
pub const INEQ_PER_NODE: usize = 8;
/// Positions, velocities and body rates may range this many scale units.
const FREE_RANGE: f64 = 10.0;
/// Smallest chunk of nodes handed to one worker.
const NODE_CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MissionSpec {
    pub x0: State16,
    pub xf: State16,
    pub t0: f64,
    pub tf: f64,
}

impl MissionSpec {
    /// Hover-to-hover flight from `from` to `to` with zero yaw at both ends.
    pub fn hover_to_hover(from: [f64; 3], to: [f64; 3], t0: f64, tf: f64, p: &QuadrotorParams) -> Self {
        let wh = hover_speed(p);
        Self { x0: State16::hover_at(from, wh), xf: State16::hover_at(to, wh), t0, tf }
    }

    pub fn duration(&self) -> f64 {
        self.tf - self.t0
    }

    pub fn validate(&self, limits: &Limits) -> Result<(), OcpError> {
        if !(self.tf > self.t0) {
            return Err(OcpError::EmptyHorizon { t0: self.t0, tf: self.tf });
        }
        self.x0
            .validate(limits)
            .map_err(|source| OcpError::InfeasibleBoundary { which: "initial", source })?;
        self.xf
            .validate(limits)
            .map_err(|source| OcpError::InfeasibleBoundary { which: "final", source })?;
        Ok(())
    }
}

/// Uniform partition of the mission horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollocationGrid {
    pub n_intervals: usize,
    pub t0: f64,
    pub tf: f64,
}

impl CollocationGrid {
    pub fn new(n_intervals: usize, t0: f64, tf: f64) -> Result<Self, OcpError> {
        if n_intervals < 2 {
            return Err(OcpError::GridTooCoarse(n_intervals));
        }
        if !(tf > t0) {
            return Err(OcpError::EmptyHorizon { t0, tf });
        }
        Ok(Self { n_intervals, t0, tf })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_intervals + 1
    }

    pub fn step(&self) -> f64 {
        (self.tf - self.t0) / self.n_intervals as f64
    }

    pub fn node_time(&self, k: usize) -> f64 {
        if k == self.n_intervals {
            self.tf
        } else {
            self.t0 + (self.tf - self.t0) * k as f64 / self.n_intervals as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_nodes()).map(|k| self.node_time(k)).collect()
    }
}

/// Everything about the airframe the planner and simulator need.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub params: QuadrotorParams,
    pub motor: MotorParams,
    pub battery: BatteryParams,
    pub limits: Limits,
    /// Converts a wind velocity sample into an acceleration disturbance (1/s).
    pub wind_gain: f64,
}

/// The transcribed program in physical units.
#[derive(Debug, Clone)]
pub struct QuadrotorOcp {
    mission: MissionSpec,
    grid: CollocationGrid,
    params: QuadrotorParams,
    motor: MotorParams,
    limits: Limits,
    efficiency: EfficiencySpec,
    /// Acceleration disturbance at each node (wind times gain).
    disturbance: Vec<[f64; 3]>,
    state_scale: [f64; STATE_DIM],
    lower: Vec<f64>,
    upper: Vec<f64>,
    control_smoothing: f64,
    clamp_width: f64,
}

/// Default weight of the rotor-acceleration smoothing term (J s^3).
pub const DEFAULT_CONTROL_SMOOTHING: f64 = 1e-8;
/// Default width of the smoothed braking clamp in the program objective (N m).
pub const DEFAULT_CLAMP_WIDTH: f64 = 1e-5;

/// Per-node dynamics evaluation shared by the constraint routines.
struct NodeEval {
    f: [f64; STATE_DIM],
    jac: Option<crate::model::DynamicsJacobian>,
}

/// Builds the nonlinear program for a mission.
pub fn transcribe(
    mission: &MissionSpec,
    grid: &CollocationGrid,
    vehicle: &Vehicle,
    wind: Option<&WindModelParams>,
    efficiency: &EfficiencySpec,
) -> Result<QuadrotorOcp, OcpError> {
    vehicle.params.validate()?;
    mission.validate(&vehicle.limits)?;
    if grid.t0 != mission.t0 || grid.tf != mission.tf {
        return Err(OcpError::EmptyHorizon { t0: grid.t0, tf: grid.tf });
    }
    let limits = vehicle.limits;
    let disturbance = grid
        .times()
        .into_iter()
        .map(|t| wind_at(t, wind).map(|w| w * vehicle.wind_gain))
        .collect();
    let state_scale = state_scale(mission, &limits);

    let (p0, pf) = (mission.x0.position(), mission.xf.position());
    let mut lo_state = [0.0; STATE_DIM];
    let mut hi_state = [0.0; STATE_DIM];
    for (axis, i) in [idx::X, idx::Y, idx::Z].into_iter().enumerate() {
        let span = FREE_RANGE * state_scale[i];
        lo_state[i] = p0[axis].min(pf[axis]) - span;
        hi_state[i] = p0[axis].max(pf[axis]) + span;
    }
    for i in [idx::XDOT, idx::YDOT, idx::ZDOT, idx::PHIDOT, idx::THETADOT, idx::PSIDOT] {
        lo_state[i] = -FREE_RANGE * state_scale[i];
        hi_state[i] = FREE_RANGE * state_scale[i];
    }
    for i in [idx::PHI, idx::THETA] {
        lo_state[i] = -limits.angle_max;
        hi_state[i] = limits.angle_max;
    }
    let yaw_span = mission.x0.0[idx::PSI].abs().max(mission.xf.0[idx::PSI].abs()) + 2.0 * PI;
    lo_state[idx::PSI] = -yaw_span;
    hi_state[idx::PSI] = yaw_span;
    for i in idx::W1..=idx::W4 {
        lo_state[i] = 0.0;
        hi_state[i] = limits.omega_max;
    }

    let n_nodes = grid.n_nodes();
    let mut lower = Vec::with_capacity(n_nodes * NODE_DIM);
    let mut upper = Vec::with_capacity(n_nodes * NODE_DIM);
    for k in 0..n_nodes {
        let pinned = match k {
            0 => Some(&mission.x0),
            k if k == grid.n_intervals => Some(&mission.xf),
            _ => None,
        };
        match pinned {
            Some(s) => {
                lower.extend_from_slice(&s.0);
                upper.extend_from_slice(&s.0);
            }
            None => {
                lower.extend_from_slice(&lo_state);
                upper.extend_from_slice(&hi_state);
            }
        }
        lower.extend_from_slice(&[-limits.alpha_max; CONTROL_DIM]);
        upper.extend_from_slice(&[limits.alpha_max; CONTROL_DIM]);
    }

    Ok(QuadrotorOcp {
        mission: *mission,
        grid: *grid,
        params: vehicle.params,
        motor: vehicle.motor,
        limits,
        efficiency: efficiency.clone(),
        disturbance,
        state_scale,
        lower,
        upper,
        control_smoothing: DEFAULT_CONTROL_SMOOTHING,
        clamp_width: DEFAULT_CLAMP_WIDTH,
    })
}

/// Characteristic magnitude of each state entry.
fn state_scale(mission: &MissionSpec, limits: &Limits) -> [f64; STATE_DIM] {
    let (p0, pf) = (mission.x0.position(), mission.xf.position());
    let span = (0..3).fold(0.0_f64, |m, i| m.max((pf[i] - p0[i]).abs()));
    let pos = span.max(1.0);
    let vel = (2.0 * pos / mission.duration()).max(1.0);
    let angle = limits.angle_max;
    let rate = 1.0;
    let w = limits.omega_max;
    [pos, vel, pos, vel, pos, vel, angle, rate, angle, rate, angle, rate, w, w, w, w]
}

impl QuadrotorOcp {
    /// Sets the weight `r` of `r * sum_k |alpha_{k+1} - alpha_k|^2 / h`, which
    /// is added to the energy in the program objective. The trapezoidal
    /// defects cannot see an alternating pattern in the nodal accelerations;
    /// this term pins it down without visibly changing the energy.
    pub fn with_control_smoothing(mut self, r: f64) -> Self {
        self.control_smoothing = r.max(0.0);
        self
    }

    pub fn control_smoothing(&self) -> f64 {
        self.control_smoothing
    }

    /// Sets the width of the smooth stand-in for the braking clamp used in
    /// the program objective; `0` keeps the exact, non-smooth clamp.
    pub fn with_clamp_width(mut self, width: f64) -> Self {
        self.clamp_width = width.max(0.0);
        self
    }

    pub fn clamp_width(&self) -> f64 {
        self.clamp_width
    }

    fn program_power(&self, z: &[f64], k: usize) -> f64 {
        let s = Self::node_state(z, k).rotor_speeds();
        let a = Self::node_control(z, k).0;
        (0..4)
            .map(|j| smoothed_rotor_power_with_grad(s[j], a[j], &self.efficiency, &self.motor, self.clamp_width).0)
            .sum()
    }

    /// Rotor mechanical energy (J) of a decision vector, without the
    /// smoothing term.
    pub fn energy(&self, z: &[f64]) -> f64 {
        let powers = par::map_indexed(self.n_nodes(), NODE_CHUNK, |k| {
            let s = Self::node_state(z, k).rotor_speeds();
            let a = Self::node_control(z, k).0;
            (0..4).map(|j| rotor_power_with_grad(s[j], a[j], &self.efficiency, &self.motor).0).sum::<f64>()
        });
        powers.iter().enumerate().map(|(k, p)| self.quadrature_weight(k) * p).sum()
    }

    fn smoothing(&self, z: &[f64]) -> f64 {
        if self.control_smoothing == 0.0 {
            return 0.0;
        }
        let c = self.control_smoothing / self.grid.step();
        let mut sum = 0.0;
        for k in 0..self.grid.n_intervals {
            for j in 0..CONTROL_DIM {
                let d = z[(k + 1) * NODE_DIM + STATE_DIM + j] - z[k * NODE_DIM + STATE_DIM + j];
                sum += d * d;
            }
        }
        c * sum
    }

    pub fn grid(&self) -> &CollocationGrid {
        &self.grid
    }

    pub fn mission(&self) -> &MissionSpec {
        &self.mission
    }

    pub fn limits(&self) -> &Limits {
        &self.limits
    }

    pub fn n_nodes(&self) -> usize {
        self.grid.n_nodes()
    }

    pub fn n_defects(&self) -> usize {
        STATE_DIM * self.grid.n_intervals
    }

    pub fn state_scale(&self) -> &[f64; STATE_DIM] {
        &self.state_scale
    }

    /// Per-variable scale: positions by the largest displacement (at least 1),
    /// angles by the roll/pitch bound, rotor speeds by `omega_max`, controls by
    /// `alpha_max`.
    pub fn var_scale(&self) -> Vec<f64> {
        let mut node = self.state_scale.to_vec();
        node.extend_from_slice(&[self.limits.alpha_max; CONTROL_DIM]);
        node.iter().copied().cycle().take(self.n_vars()).collect()
    }

    /// Energy of a steady hover over the horizon at unit efficiency (J).
    pub fn objective_scale(&self) -> f64 {
        let wh = hover_speed(&self.params);
        (4.0 * self.params.kappa * wh.powi(3) * self.mission.duration()).max(1.0)
    }

    /// The same program in scaled variables.
    pub fn scaled(&self) -> Scaled<'_, Self> {
        Scaled::new(self, self.var_scale(), self.objective_scale())
    }

    fn node_state(z: &[f64], k: usize) -> State16 {
        let mut s = [0.0; STATE_DIM];
        s.copy_from_slice(&z[k * NODE_DIM..k * NODE_DIM + STATE_DIM]);
        State16(s)
    }

    fn node_control(z: &[f64], k: usize) -> AuxControl {
        let mut a = [0.0; CONTROL_DIM];
        a.copy_from_slice(&z[k * NODE_DIM + STATE_DIM..(k + 1) * NODE_DIM]);
        AuxControl(a)
    }

    fn eval_nodes(&self, z: &[f64], with_jacobian: bool) -> Vec<NodeEval> {
        par::map_indexed(self.n_nodes(), NODE_CHUNK, |k| {
            let s = Self::node_state(z, k);
            let u = Self::node_control(z, k);
            let f = dynamics_rhs(&s, &u, self.disturbance[k], 1.0, &self.params).0;
            let jac = with_jacobian.then(|| dynamics_jacobian(&s, &self.params));
            NodeEval { f, jac }
        })
    }

    fn quadrature_weight(&self, k: usize) -> f64 {
        let h = self.grid.step();
        if k == 0 || k == self.grid.n_intervals {
            0.5 * h
        } else {
            h
        }
    }

    /// Decision vector to time-stamped samples.
    pub fn trajectory(&self, z: &[f64]) -> Vec<Sample> {
        (0..self.n_nodes())
            .map(|k| Sample {
                t: self.grid.node_time(k),
                state: Self::node_state(z, k),
                control: Self::node_control(z, k),
            })
            .collect()
    }

    /// Largest absolute defect, in scaled units.
    pub fn max_defect(&self, z: &[f64]) -> f64 {
        let mut c = vec![0.0; self.n_eq()];
        self.eq_constraints(z, &mut c);
        inf_norm(&c[..self.n_defects()])
    }

    fn wrench_rows(&self, w: [f64; 4]) -> [f64; INEQ_PER_NODE] {
        let u = mix(w, &self.params);
        let t = u.u1 / self.limits.t_max();
        let um = self.limits.u_max;
        [
            t - 1.0,
            -t,
            u.u2 / um - 1.0,
            -u.u2 / um - 1.0,
            u.u3 / um - 1.0,
            -u.u3 / um - 1.0,
            u.u4 / um - 1.0,
            -u.u4 / um - 1.0,
        ]
    }

    /// `d(wrench rows)/d w_j`.
    fn wrench_row_jacobian(&self, w: [f64; 4]) -> [[f64; 4]; INEQ_PER_NODE] {
        let p = &self.params;
        let tm = self.limits.t_max();
        let um = self.limits.u_max;
        let lk = p.l * p.kappa_b;
        let du1 = w.map(|v| 2.0 * p.kappa_b * v / tm);
        let du2 = [0.0, 2.0 * lk * w[1] / um, 0.0, -2.0 * lk * w[3] / um];
        let du3 = [-2.0 * lk * w[0] / um, 0.0, 2.0 * lk * w[2] / um, 0.0];
        let du4 = [
            2.0 * p.kappa * w[0] / um,
            -2.0 * p.kappa * w[1] / um,
            2.0 * p.kappa * w[2] / um,
            -2.0 * p.kappa * w[3] / um,
        ];
        let neg = |r: [f64; 4]| r.map(|v| -v);
        [du1, neg(du1), du2, neg(du2), du3, neg(du3), du4, neg(du4)]
    }
}

impl NlpProblem for QuadrotorOcp {
    fn n_vars(&self) -> usize {
        NODE_DIM * self.n_nodes()
    }

    fn n_eq(&self) -> usize {
        self.n_defects() + 2 * STATE_DIM
    }

    fn n_ineq(&self) -> usize {
        INEQ_PER_NODE * self.n_nodes()
    }

    fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.lower, &self.upper)
    }

    /// Nodes couple only to their neighbours.
    fn hessian_bandwidth(&self) -> Option<usize> {
        Some(2 * NODE_DIM - 1)
    }

    fn objective(&self, z: &[f64]) -> f64 {
        let powers = par::map_indexed(self.n_nodes(), NODE_CHUNK, |k| self.program_power(z, k));
        let energy: f64 = powers.iter().enumerate().map(|(k, p)| self.quadrature_weight(k) * p).sum();
        energy + self.smoothing(z)
    }

    fn objective_gradient(&self, z: &[f64], grad: &mut [f64]) {
        grad.fill(0.0);
        for k in 0..self.n_nodes() {
            let wk = self.quadrature_weight(k);
            let s = Self::node_state(z, k).rotor_speeds();
            let a = Self::node_control(z, k).0;
            for j in 0..4 {
                let (_, dp_da, dp_dw) =
                    smoothed_rotor_power_with_grad(s[j], a[j], &self.efficiency, &self.motor, self.clamp_width);
                grad[k * NODE_DIM + idx::W1 + j] = wk * dp_dw;
                grad[k * NODE_DIM + STATE_DIM + j] = wk * dp_da;
            }
        }
        if self.control_smoothing > 0.0 {
            let c = 2.0 * self.control_smoothing / self.grid.step();
            for k in 0..self.grid.n_intervals {
                for j in 0..CONTROL_DIM {
                    let (a, b) = (k * NODE_DIM + STATE_DIM + j, (k + 1) * NODE_DIM + STATE_DIM + j);
                    let d = c * (z[b] - z[a]);
                    grad[b] += d;
                    grad[a] -= d;
                }
            }
        }
    }

    fn eq_constraints(&self, z: &[f64], out: &mut [f64]) {
        let nodes = self.eval_nodes(z, false);
        let half_h = 0.5 * self.grid.step();
        for k in 0..self.grid.n_intervals {
            let (a, b) = (k * NODE_DIM, (k + 1) * NODE_DIM);
            for i in 0..STATE_DIM {
                let d = z[b + i] - z[a + i] - half_h * (nodes[k].f[i] + nodes[k + 1].f[i]);
                out[k * STATE_DIM + i] = d / self.state_scale[i];
            }
        }
        let base = self.n_defects();
        let last = self.grid.n_intervals * NODE_DIM;
        for i in 0..STATE_DIM {
            out[base + i] = (z[i] - self.mission.x0.0[i]) / self.state_scale[i];
            out[base + STATE_DIM + i] = (z[last + i] - self.mission.xf.0[i]) / self.state_scale[i];
        }
    }

    fn ineq_constraints(&self, z: &[f64], out: &mut [f64]) {
        for k in 0..self.n_nodes() {
            let rows = self.wrench_rows(Self::node_state(z, k).rotor_speeds());
            out[k * INEQ_PER_NODE..(k + 1) * INEQ_PER_NODE].copy_from_slice(&rows);
        }
    }

    fn eq_jacobian(&self, z: &[f64]) -> SparseMatrix {
        let nodes = self.eval_nodes(z, true);
        let half_h = 0.5 * self.grid.step();
        let mut jac = SparseMatrix::new(self.n_eq(), self.n_vars());
        for k in 0..self.grid.n_intervals {
            for (node, sign) in [(k, -1.0), (k + 1, 1.0)] {
                let jn = nodes[node].jac.as_ref().expect("jacobian requested");
                for i in 0..STATE_DIM {
                    let row = k * STATE_DIM + i;
                    let inv = 1.0 / self.state_scale[i];
                    for j in 0..STATE_DIM {
                        let identity = if i == j { sign } else { 0.0 };
                        jac.push(row, node * NODE_DIM + j, (identity - half_h * jn.state[i][j]) * inv);
                    }
                    for c in 0..CONTROL_DIM {
                        jac.push(row, node * NODE_DIM + STATE_DIM + c, -half_h * jn.control[i][c] * inv);
                    }
                }
            }
        }
        let base = self.n_defects();
        let last = self.grid.n_intervals * NODE_DIM;
        for i in 0..STATE_DIM {
            jac.push(base + i, i, 1.0 / self.state_scale[i]);
            jac.push(base + STATE_DIM + i, last + i, 1.0 / self.state_scale[i]);
        }
        jac
    }

    fn ineq_jacobian(&self, z: &[f64]) -> SparseMatrix {
        let mut jac = SparseMatrix::new(self.n_ineq(), self.n_vars());
        for k in 0..self.n_nodes() {
            let d = self.wrench_row_jacobian(Self::node_state(z, k).rotor_speeds());
            for (r, row) in d.iter().enumerate() {
                for j in 0..4 {
                    jac.push(k * INEQ_PER_NODE + r, k * NODE_DIM + idx::W1 + j, row[j]);
                }
            }
        }
        jac
    }

    fn eq_jacobian_t_product(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        let n = self.grid.n_intervals;
        let half_h = 0.5 * self.grid.step();
        let base = self.n_defects();
        let blocks = par::map_indexed(self.n_nodes(), NODE_CHUNK, |k| {
            let s = Self::node_state(z, k);
            let jn = dynamics_jacobian(&s, &self.params);
            // weights of the intervals ending and starting at node k, divided by scale
            let mut left = [0.0; STATE_DIM];
            let mut right = [0.0; STATE_DIM];
            for i in 0..STATE_DIM {
                if k > 0 {
                    left[i] = w[(k - 1) * STATE_DIM + i] / self.state_scale[i];
                }
                if k < n {
                    right[i] = w[k * STATE_DIM + i] / self.state_scale[i];
                }
            }
            let mut block = [0.0; NODE_DIM];
            for i in 0..STATE_DIM {
                block[i] = left[i] - right[i];
            }
            for i in 0..STATE_DIM {
                let sum = left[i] + right[i];
                if sum == 0.0 {
                    continue;
                }
                for j in 0..STATE_DIM {
                    block[j] -= half_h * jn.state[i][j] * sum;
                }
                for c in 0..CONTROL_DIM {
                    block[STATE_DIM + c] -= half_h * jn.control[i][c] * sum;
                }
            }
            if k == 0 {
                for i in 0..STATE_DIM {
                    block[i] += w[base + i] / self.state_scale[i];
                }
            }
            if k == n {
                for i in 0..STATE_DIM {
                    block[i] += w[base + STATE_DIM + i] / self.state_scale[i];
                }
            }
            block
        });
        for (k, block) in blocks.iter().enumerate() {
            out[k * NODE_DIM..(k + 1) * NODE_DIM].copy_from_slice(block);
        }
    }

    fn ineq_jacobian_t_product(&self, z: &[f64], w: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for k in 0..self.n_nodes() {
            let rows = &w[k * INEQ_PER_NODE..(k + 1) * INEQ_PER_NODE];
            if rows.iter().all(|v| *v == 0.0) {
                continue;
            }
            let d = self.wrench_row_jacobian(Self::node_state(z, k).rotor_speeds());
            for (r, row) in d.iter().enumerate() {
                for j in 0..4 {
                    out[k * NODE_DIM + idx::W1 + j] += rows[r] * row[j];
                }
            }
        }
    }
}

/// Straight-line, level, hover-speed starting point for the solver.
pub fn initial_guess(mission: &MissionSpec, grid: &CollocationGrid, p: &QuadrotorParams) -> Vec<f64> {
    let wh = hover_speed(p);
    let duration = mission.duration();
    let n = grid.n_intervals;
    let mut z = Vec::with_capacity(grid.n_nodes() * NODE_DIM);
    for k in 0..grid.n_nodes() {
        let state = match k {
            0 => mission.x0,
            k if k == n => mission.xf,
            _ => {
                let frac = (grid.node_time(k) - mission.t0) / duration;
                let mut s = State16::hover_at([0.0; 3], wh);
                for (pos, vel) in [(idx::X, idx::XDOT), (idx::Y, idx::YDOT), (idx::Z, idx::ZDOT), (idx::PSI, idx::PSIDOT)] {
                    let (a, b) = (mission.x0.0[pos], mission.xf.0[pos]);
                    s.0[pos] = a + frac * (b - a);
                    s.0[vel] = (b - a) / duration;
                }
                s
            }
        };
        z.extend_from_slice(&state.0);
        z.extend_from_slice(&[0.0; CONTROL_DIM]);
    }
    z
}

/// Worst relative disagreement between analytic and finite-difference
/// derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientCheck {
    pub objective: f64,
    pub eq_jacobian: f64,
    pub ineq_jacobian: f64,
    /// Consistency of the transpose-product fast path with the Jacobian.
    pub transpose_products: f64,
}

impl GradientCheck {
    pub fn worst(&self) -> f64 {
        self.objective.max(self.eq_jacobian).max(self.ineq_jacobian).max(self.transpose_products)
    }
}

fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    let scale = inf_norm(a).max(inf_norm(b)).max(1e-300);
    diff / scale
}

/// Deterministic direction with entries in [-1, 1].
fn probe_direction(n: usize, seed: u64) -> Vec<f64> {
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect()
}

/// Compares the problem's derivatives against central differences with step
/// `1e-6` at `z`. Jacobians are probed along a few fixed directions.
pub fn check_gradients<P: NlpProblem>(problem: &P, z: &[f64]) -> GradientCheck {
    const PROBES: u64 = 4;
    let n = problem.n_vars();
    let mut grad = vec![0.0; n];
    problem.objective_gradient(z, &mut grad);
    let mut fd = vec![0.0; n];
    fd_gradient(|x| problem.objective(x), z, &mut fd);
    let objective = rel_error(&grad, &fd);

    let mut eq_err: f64 = 0.0;
    let mut ineq_err: f64 = 0.0;
    let mut tp_err: f64 = 0.0;
    let je = problem.eq_jacobian(z);
    let ji = problem.ineq_jacobian(z);
    for seed in 1..=PROBES {
        let v = probe_direction(n, seed);
        let mut jv = vec![0.0; problem.n_eq()];
        je.mul_vec(&v, &mut jv);
        let fdv = fd_directional(|x, o| problem.eq_constraints(x, o), z, &v, problem.n_eq(), nlp::FD_STEP);
        eq_err = eq_err.max(rel_error(&jv, &fdv));

        if problem.n_ineq() > 0 {
            let mut jv = vec![0.0; problem.n_ineq()];
            ji.mul_vec(&v, &mut jv);
            let fdv =
                fd_directional(|x, o| problem.ineq_constraints(x, o), z, &v, problem.n_ineq(), nlp::FD_STEP);
            ineq_err = ineq_err.max(rel_error(&jv, &fdv));
        }

        let w = probe_direction(problem.n_eq(), seed + 100);
        let (mut fast, mut slow) = (vec![0.0; n], vec![0.0; n]);
        problem.eq_jacobian_t_product(z, &w, &mut fast);
        je.tmul_vec(&w, &mut slow);
        tp_err = tp_err.max(rel_error(&fast, &slow));
        if problem.n_ineq() > 0 {
            let w = probe_direction(problem.n_ineq(), seed + 200);
            problem.ineq_jacobian_t_product(z, &w, &mut fast);
            ji.tmul_vec(&w, &mut slow);
            tp_err = tp_err.max(rel_error(&fast, &slow));
        }
    }
    GradientCheck { objective, eq_jacobian: eq_err, ineq_jacobian: ineq_err, transpose_products: tp_err }
}

/// Solved trajectory in physical units.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub trajectory: Vec<Sample>,
    /// Rotor mechanical energy (J), excluding the smoothing term.
    pub objective: f64,
    pub kkt: KktReport,
    pub status: SolveStatus,
    /// Largest scaled defect at the returned point.
    pub max_defect: f64,
    /// Largest inequality residual (normalized units, `<= 0` is feasible).
    pub max_path_violation: f64,
    pub log: Vec<nlp::IterationLog>,
}

/// Scales, solves from the straight-line guess, and unscales.
pub fn solve_ocp(ocp: &QuadrotorOcp, settings: &SolverSettings) -> SolveResult {
    let z0 = initial_guess(&ocp.mission, &ocp.grid, &ocp.params);
    solve_ocp_from(ocp, &z0, settings)
}

pub fn solve_ocp_from(ocp: &QuadrotorOcp, z0: &[f64], settings: &SolverSettings) -> SolveResult {
    let scaled = ocp.scaled();
    let sol = nlp::solve(&scaled, &scaled.scale(z0), settings);
    let z = scaled.unscale(&sol.z);
    let mut g = vec![0.0; ocp.n_ineq()];
    ocp.ineq_constraints(&z, &mut g);
    SolveResult {
        trajectory: ocp.trajectory(&z),
        objective: ocp.energy(&z),
        kkt: sol.kkt,
        status: sol.status,
        max_defect: ocp.max_defect(&z),
        max_path_violation: g.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v)),
        log: sol.log,
    }
}

/// Flattens a trajectory back into a decision vector.
pub fn decision_vector(traj: &[Sample]) -> Vec<f64> {
    traj.iter().flat_map(|s| s.state.0.into_iter().chain(s.control.0)).collect()
}
