//! Rigid-body quadrotor dynamics in dynamic-extension form.
//!
//! The state carries the four rotor speeds alongside the usual pose and rate
//! channels, so the rotor angular accelerations become the control input and
//! the system is affine in it. Attitude uses Z-Y-X Euler angles.

use serde::{Deserialize, Serialize};

use crate::error::ModelError;

/// Number of entries in [`State16`].
pub const STATE_DIM: usize = 16;
/// Number of entries in [`AuxControl`].
pub const CONTROL_DIM: usize = 4;

/// Index constants into [`State16`], in the canonical `x1..x16` order.
pub mod idx {
    pub const X: usize = 0;
    pub const XDOT: usize = 1;
    pub const Y: usize = 2;
    pub const YDOT: usize = 3;
    pub const Z: usize = 4;
    pub const ZDOT: usize = 5;
    pub const PHI: usize = 6;
    pub const PHIDOT: usize = 7;
    pub const THETA: usize = 8;
    pub const THETADOT: usize = 9;
    pub const PSI: usize = 10;
    pub const PSIDOT: usize = 11;
    pub const W1: usize = 12;
    pub const W2: usize = 13;
    pub const W3: usize = 14;
    pub const W4: usize = 15;
}

/// Sign pattern of each rotor in the gyroscopic speed sum and in the yaw torque.
const SPIN: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// Airframe and rotor parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadrotorParams {
    /// Mass (kg).
    pub m: f64,
    /// Distance from the center of mass to a rotor shaft (m).
    pub l: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Rotor plus propeller inertia (kg m^2).
    pub ir: f64,
    /// Thrust coefficient (N s^2/rad^2).
    pub kappa_b: f64,
    /// Drag torque coefficient (N m s^2/rad^2).
    pub kappa: f64,
    pub g: f64,
}

impl Default for QuadrotorParams {
    /// DJI Phantom 2 with 2212/920KV motors.
    fn default() -> Self {
        Self {
            m: 1.3,
            l: 0.175,
            ix: 0.081,
            iy: 0.081,
            iz: 0.142,
            ir: 4.1904e-5,
            kappa_b: 3.8305e-6,
            kappa: 2.2518e-8,
            g: 9.81,
        }
    }
}

impl QuadrotorParams {
    /// Checks positivity and the inertia triangle inequality. The error names
    /// the offending field.
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("m", self.m),
            ("l", self.l),
            ("ix", self.ix),
            ("iy", self.iy),
            ("iz", self.iz),
            ("ir", self.ir),
            ("kappa_b", self.kappa_b),
            ("kappa", self.kappa),
            ("g", self.g),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        let (a, b, c) = (self.ix, self.iy, self.iz);
        if a > b + c || b > a + c || c > a + b {
            return Err(ModelError::InvalidParameter {
                name: "iz",
                reason: format!("inertia triple ({a}, {b}, {c}) violates the triangle inequality"),
            });
        }
        Ok(())
    }
}

/// Full dynamic-extension state `x1..x16`: `x, xdot, y, ydot, z, zdot, phi,
/// phidot, theta, thetadot, psi, psidot, w1, w2, w3, w4`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct State16(pub [f64; STATE_DIM]);

impl State16 {
    pub fn zeros() -> Self {
        Self([0.0; STATE_DIM])
    }

    /// Level, motionless state at `position` with every rotor at `rotor_speed`.
    pub fn hover_at(position: [f64; 3], rotor_speed: f64) -> Self {
        let mut s = [0.0; STATE_DIM];
        s[idx::X] = position[0];
        s[idx::Y] = position[1];
        s[idx::Z] = position[2];
        s[idx::W1..=idx::W4].fill(rotor_speed);
        Self(s)
    }

    pub fn position(&self) -> [f64; 3] {
        [self.0[idx::X], self.0[idx::Y], self.0[idx::Z]]
    }

    pub fn velocity(&self) -> [f64; 3] {
        [self.0[idx::XDOT], self.0[idx::YDOT], self.0[idx::ZDOT]]
    }

    /// Roll, pitch, yaw.
    pub fn attitude(&self) -> [f64; 3] {
        [self.0[idx::PHI], self.0[idx::THETA], self.0[idx::PSI]]
    }

    pub fn rates(&self) -> [f64; 3] {
        [self.0[idx::PHIDOT], self.0[idx::THETADOT], self.0[idx::PSIDOT]]
    }

    pub fn rotor_speeds(&self) -> [f64; 4] {
        [self.0[idx::W1], self.0[idx::W2], self.0[idx::W3], self.0[idx::W4]]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Checks the roll/pitch box and the rotor speed range.
    pub fn validate(&self, limits: &Limits) -> Result<(), ModelError> {
        if !self.is_finite() {
            return Err(ModelError::NonFinite("state"));
        }
        for (name, i) in [("phi", idx::PHI), ("theta", idx::THETA)] {
            if self.0[i].abs() > limits.angle_max {
                return Err(ModelError::OutOfBounds {
                    name,
                    value: self.0[i],
                    lo: -limits.angle_max,
                    hi: limits.angle_max,
                });
            }
        }
        for (j, w) in self.rotor_speeds().into_iter().enumerate() {
            if !(0.0..=limits.omega_max).contains(&w) {
                return Err(ModelError::OutOfBounds {
                    name: ["w1", "w2", "w3", "w4"][j],
                    value: w,
                    lo: 0.0,
                    hi: limits.omega_max,
                });
            }
        }
        Ok(())
    }
}

/// Rotor angular accelerations `alpha1..alpha4` (rad/s^2).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AuxControl(pub [f64; CONTROL_DIM]);

impl AuxControl {
    pub fn zeros() -> Self {
        Self([0.0; CONTROL_DIM])
    }

    pub fn validate(&self, limits: &Limits) -> Result<(), ModelError> {
        for (j, a) in self.0.iter().enumerate() {
            if !a.is_finite() {
                return Err(ModelError::NonFinite("control"));
            }
            if a.abs() > limits.alpha_max {
                return Err(ModelError::OutOfBounds {
                    name: ["a1", "a2", "a3", "a4"][j],
                    value: *a,
                    lo: -limits.alpha_max,
                    hi: limits.alpha_max,
                });
            }
        }
        Ok(())
    }
}

/// Actuator and attitude limits. `t_max` is always derived from `omega_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub omega_max: f64,
    pub alpha_max: f64,
    pub angle_max: f64,
    pub u_max: f64,
    t_max: f64,
}

impl Limits {
    pub fn new(
        omega_max: f64,
        alpha_max: f64,
        angle_max: f64,
        u_max: f64,
        kappa_b: f64,
    ) -> Result<Self, ModelError> {
        for (name, v) in [
            ("omega_max", omega_max),
            ("alpha_max", alpha_max),
            ("angle_max", angle_max),
            ("u_max", u_max),
            ("kappa_b", kappa_b),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::InvalidParameter {
                    name,
                    reason: format!("must be finite and > 0, got {v}"),
                });
            }
        }
        Ok(Self {
            omega_max,
            alpha_max,
            angle_max,
            u_max,
            t_max: 4.0 * kappa_b * omega_max * omega_max,
        })
    }

    /// Maximum total thrust, `4 kappa_b omega_max^2`.
    pub fn t_max(&self) -> f64 {
        self.t_max
    }
}

/// Total thrust and body torques produced by the rotors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wrench {
    pub u1: f64,
    pub u2: f64,
    pub u3: f64,
    pub u4: f64,
}

/// Maps rotor speeds to thrust and roll/pitch/yaw torques.
pub fn control_map(w: [f64; 4], p: &QuadrotorParams) -> Result<Wrench, ModelError> {
    if let Some(&bad) = w.iter().find(|v| !(**v >= 0.0)) {
        return Err(ModelError::NegativeRotorSpeed(bad));
    }
    Ok(mix(w, p))
}

/// Mixing without the sign check. Depends on the squares only.
pub(crate) fn mix(w: [f64; 4], p: &QuadrotorParams) -> Wrench {
    let q = w.map(|v| v * v);
    Wrench {
        u1: p.kappa_b * (q[0] + q[1] + q[2] + q[3]),
        u2: p.l * p.kappa_b * (q[1] - q[3]),
        u3: p.l * p.kappa_b * (q[2] - q[0]),
        u4: p.kappa * (q[0] - q[1] + q[2] - q[3]),
    }
}

/// Rotor speed at which the total thrust equals the weight.
pub fn hover_speed(p: &QuadrotorParams) -> f64 {
    (p.m * p.g / (4.0 * p.kappa_b)).sqrt()
}

/// Solves the mixing relation for squared rotor speeds. Entries may come out
/// negative when the wrench is not achievable; callers clamp.
pub fn inverse_mix(u: &Wrench, p: &QuadrotorParams) -> [f64; 4] {
    let sum = u.u1 / p.kappa_b;
    let roll = u.u2 / (p.l * p.kappa_b);
    let pitch = u.u3 / (p.l * p.kappa_b);
    let yaw = u.u4 / p.kappa;
    let odd = 0.5 * (sum + yaw);
    let even = 0.5 * (sum - yaw);
    [
        0.5 * (odd - pitch),
        0.5 * (even + roll),
        0.5 * (odd + pitch),
        0.5 * (even - roll),
    ]
}

/// Time derivative of the state.
///
/// `wind` is the wind velocity sample; it is multiplied by `wind_gain` (1/s)
/// and added to the translational acceleration rows.
pub fn dynamics_rhs(
    s: &State16,
    u: &AuxControl,
    wind: [f64; 3],
    wind_gain: f64,
    p: &QuadrotorParams,
) -> State16 {
    let x = &s.0;
    let w = s.rotor_speeds();
    let wr = mix(w, p);
    let varpi = gyro_speed(w);
    let (sphi, cphi) = x[idx::PHI].sin_cos();
    let (sth, cth) = x[idx::THETA].sin_cos();
    let (spsi, cpsi) = x[idx::PSI].sin_cos();
    let (phid, thd, psid) = (x[idx::PHIDOT], x[idx::THETADOT], x[idx::PSIDOT]);
    let thrust_acc = wr.u1 / p.m;

    let mut d = [0.0; STATE_DIM];
    d[idx::X] = x[idx::XDOT];
    d[idx::Y] = x[idx::YDOT];
    d[idx::Z] = x[idx::ZDOT];
    d[idx::XDOT] = (cphi * sth * cpsi + sphi * spsi) * thrust_acc + wind_gain * wind[0];
    d[idx::YDOT] = (cphi * sth * spsi - sphi * cpsi) * thrust_acc + wind_gain * wind[1];
    d[idx::ZDOT] = cphi * cth * thrust_acc - p.g + wind_gain * wind[2];
    d[idx::PHI] = phid;
    d[idx::THETA] = thd;
    d[idx::PSI] = psid;
    d[idx::PHIDOT] = ((p.iy - p.iz) * thd * psid + p.ir * thd * varpi + wr.u2) / p.ix;
    d[idx::THETADOT] = ((p.iz - p.ix) * phid * psid - p.ir * phid * varpi + wr.u3) / p.iy;
    d[idx::PSIDOT] = ((p.ix - p.iy) * phid * thd + wr.u4) / p.iz;
    d[idx::W1..=idx::W4].copy_from_slice(&u.0);
    State16(d)
}

/// `w1 - w2 + w3 - w4`.
pub fn gyro_speed(w: [f64; 4]) -> f64 {
    w.iter().zip(SPIN).map(|(v, s)| v * s).sum()
}

/// Dense Jacobian of [`dynamics_rhs`]: `state[i][j] = d f_i / d x_j` and
/// `control[i][k] = d f_i / d alpha_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsJacobian {
    pub state: [[f64; STATE_DIM]; STATE_DIM],
    pub control: [[f64; CONTROL_DIM]; STATE_DIM],
}

/// Analytic Jacobian of [`dynamics_rhs`]. The wind term is state independent.
pub fn dynamics_jacobian(s: &State16, p: &QuadrotorParams) -> DynamicsJacobian {
    let x = &s.0;
    let w = s.rotor_speeds();
    let u1 = mix(w, p).u1;
    let varpi = gyro_speed(w);
    let (sphi, cphi) = x[idx::PHI].sin_cos();
    let (sth, cth) = x[idx::THETA].sin_cos();
    let (spsi, cpsi) = x[idx::PSI].sin_cos();
    let (phid, thd, psid) = (x[idx::PHIDOT], x[idx::THETADOT], x[idx::PSIDOT]);
    let a = u1 / p.m;

    let mut js = [[0.0; STATE_DIM]; STATE_DIM];
    let mut jc = [[0.0; CONTROL_DIM]; STATE_DIM];

    js[idx::X][idx::XDOT] = 1.0;
    js[idx::Y][idx::YDOT] = 1.0;
    js[idx::Z][idx::ZDOT] = 1.0;
    js[idx::PHI][idx::PHIDOT] = 1.0;
    js[idx::THETA][idx::THETADOT] = 1.0;
    js[idx::PSI][idx::PSIDOT] = 1.0;

    // thrust direction components
    let bx = cphi * sth * cpsi + sphi * spsi;
    let by = cphi * sth * spsi - sphi * cpsi;
    let bz = cphi * cth;

    let rx = &mut js[idx::XDOT];
    rx[idx::PHI] = (-sphi * sth * cpsi + cphi * spsi) * a;
    rx[idx::THETA] = cphi * cth * cpsi * a;
    rx[idx::PSI] = (-cphi * sth * spsi + sphi * cpsi) * a;

    let ry = &mut js[idx::YDOT];
    ry[idx::PHI] = (-sphi * sth * spsi - cphi * cpsi) * a;
    ry[idx::THETA] = cphi * cth * spsi * a;
    ry[idx::PSI] = (cphi * sth * cpsi + sphi * spsi) * a;

    let rz = &mut js[idx::ZDOT];
    rz[idx::PHI] = -sphi * cth * a;
    rz[idx::THETA] = -cphi * sth * a;

    let lk = p.l * p.kappa_b;
    for j in 0..4 {
        let col = idx::W1 + j;
        let du1 = 2.0 * p.kappa_b * w[j] / p.m;
        js[idx::XDOT][col] = bx * du1;
        js[idx::YDOT][col] = by * du1;
        js[idx::ZDOT][col] = bz * du1;
    }

    let r = &mut js[idx::PHIDOT];
    r[idx::THETADOT] = ((p.iy - p.iz) * psid + p.ir * varpi) / p.ix;
    r[idx::PSIDOT] = (p.iy - p.iz) * thd / p.ix;
    let du2 = [0.0, 2.0 * lk * w[1], 0.0, -2.0 * lk * w[3]];
    for j in 0..4 {
        r[idx::W1 + j] = (p.ir * thd * SPIN[j] + du2[j]) / p.ix;
    }

    let r = &mut js[idx::THETADOT];
    r[idx::PHIDOT] = ((p.iz - p.ix) * psid - p.ir * varpi) / p.iy;
    r[idx::PSIDOT] = (p.iz - p.ix) * phid / p.iy;
    let du3 = [-2.0 * lk * w[0], 0.0, 2.0 * lk * w[2], 0.0];
    for j in 0..4 {
        r[idx::W1 + j] = (-p.ir * phid * SPIN[j] + du3[j]) / p.iy;
    }

    let r = &mut js[idx::PSIDOT];
    r[idx::PHIDOT] = (p.ix - p.iy) * thd / p.iz;
    r[idx::THETADOT] = (p.ix - p.iy) * phid / p.iz;
    for j in 0..4 {
        r[idx::W1 + j] = 2.0 * p.kappa * w[j] * SPIN[j] / p.iz;
    }

    for k in 0..CONTROL_DIM {
        jc[idx::W1 + k][k] = 1.0;
    }

    DynamicsJacobian { state: js, control: jc }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn phantom() -> QuadrotorParams {
        QuadrotorParams::default()
    }

    #[test]
    fn hover_thrust_at_rounded_speed() {
        let u = control_map([912.0; 4], &phantom()).unwrap();
        // 4 * 3.8305e-6 * 912^2
        assert_abs_diff_eq!(u.u1, 12.743_981_568, epsilon = 1e-9);
        assert_eq!((u.u2, u.u3, u.u4), (0.0, 0.0, 0.0));
        assert_eq!(format!("{:.2}", u.u1), "12.74");
    }

    #[test]
    fn zero_speed_gives_zero_wrench() {
        let u = control_map([0.0; 4], &phantom()).unwrap();
        assert_eq!(u, Wrench { u1: 0.0, u2: 0.0, u3: 0.0, u4: 0.0 });
    }

    #[test]
    fn negative_speed_rejected() {
        assert!(matches!(
            control_map([1.0, -2.0, 3.0, 4.0], &phantom()),
            Err(ModelError::NegativeRotorSpeed(v)) if v == -2.0
        ));
        assert!(control_map([f64::NAN, 0.0, 0.0, 0.0], &phantom()).is_err());
    }

    #[test]
    fn hover_speed_balances_weight() {
        let p = phantom();
        let wh = hover_speed(&p);
        assert_abs_diff_eq!(wh, 912.3, epsilon = 0.05);
        let u1 = control_map([wh; 4], &p).unwrap().u1;
        assert_abs_diff_eq!(u1 - p.m * p.g, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn hover_speed_scales_with_sqrt_mass() {
        let p = phantom();
        let heavy = QuadrotorParams { m: 4.0 * p.m, ..p };
        assert_abs_diff_eq!(hover_speed(&heavy), 2.0 * hover_speed(&p), epsilon = 1e-9);
    }

    #[test]
    fn hover_is_equilibrium() {
        let p = phantom();
        let s = State16::hover_at([0.0; 3], hover_speed(&p));
        let d = dynamics_rhs(&s, &AuxControl::zeros(), [0.0; 3], 1.0, &p);
        for v in d.0 {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn rounded_hover_sinks() {
        let p = phantom();
        let s = State16::hover_at([0.0; 3], 912.0);
        let d = dynamics_rhs(&s, &AuxControl::zeros(), [0.0; 3], 1.0, &p);
        let expected = (4.0 * p.kappa_b * 912.0 * 912.0 - p.m * p.g) / p.m;
        assert_abs_diff_eq!(d.0[idx::ZDOT], expected, epsilon = 1e-12);
        assert_abs_diff_eq!(d.0[idx::ZDOT], -6.93e-3, epsilon = 1e-5);
    }

    #[test]
    fn wind_adds_to_acceleration() {
        let p = phantom();
        let s = State16::hover_at([0.0; 3], hover_speed(&p));
        let d = dynamics_rhs(&s, &AuxControl::zeros(), [1.0, 0.5, 0.0], 1.0, &p);
        assert_abs_diff_eq!(d.0[idx::XDOT], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d.0[idx::YDOT], 0.5, epsilon = 1e-12);
        let half = dynamics_rhs(&s, &AuxControl::zeros(), [1.0, 0.5, 0.0], 0.5, &p);
        assert_abs_diff_eq!(half.0[idx::XDOT], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn rotor_rows_follow_control() {
        let p = phantom();
        let s = State16::hover_at([0.0; 3], 900.0);
        let d = dynamics_rhs(&s, &AuxControl([1.0, -2.0, 3.0, -4.0]), [0.0; 3], 1.0, &p);
        assert_eq!(d.rotor_speeds(), [1.0, -2.0, 3.0, -4.0]);
    }

    #[test]
    fn inverse_mix_round_trip() {
        let p = phantom();
        let w = [850.0, 910.0, 930.0, 880.0];
        let q = inverse_mix(&mix(w, &p), &p);
        for j in 0..4 {
            assert_abs_diff_eq!(q[j], w[j] * w[j], epsilon = 1e-6);
        }
    }

    #[test]
    fn limits_derive_max_thrust() {
        let p = phantom();
        let lim = Limits::new(1200.0, 4000.0, std::f64::consts::FRAC_PI_2, 0.5, p.kappa_b).unwrap();
        assert_eq!(lim.t_max(), 4.0 * p.kappa_b * 1200.0 * 1200.0);
        assert_abs_diff_eq!(lim.t_max(), 22.06, epsilon = 0.01);
        assert!(Limits::new(-1.0, 4000.0, 1.0, 0.5, p.kappa_b).is_err());
    }

    #[test]
    fn state_validation() {
        let p = phantom();
        let lim = Limits::new(1200.0, 4000.0, std::f64::consts::FRAC_PI_2, 0.5, p.kappa_b).unwrap();
        let mut s = State16::hover_at([0.0; 3], 912.0);
        assert!(s.validate(&lim).is_ok());
        s.0[idx::THETA] = 2.0;
        assert!(s.validate(&lim).is_err());
        let s = State16::hover_at([0.0; 3], 1300.0);
        assert!(s.validate(&lim).is_err());
        assert!(AuxControl([5000.0, 0.0, 0.0, 0.0]).validate(&lim).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(phantom().validate().is_ok());
        let bad = QuadrotorParams { ix: 0.01, iy: 0.01, iz: 0.5, ..phantom() };
        assert!(bad.validate().is_err());
        let bad = QuadrotorParams { m: -1.0, ..phantom() };
        assert!(matches!(bad.validate(), Err(ModelError::InvalidParameter { name: "m", .. })));
    }

    #[test]
    fn analytic_jacobian_matches_central_differences() {
        let p = phantom();
        let s = State16([
            0.3, -0.2, 1.0, 0.4, 2.0, -0.1, 0.2, 0.3, -0.25, -0.4, 0.7, 0.15, 880.0, 930.0, 905.0,
            870.0,
        ]);
        let u = AuxControl([10.0, -20.0, 5.0, 0.0]);
        let jac = dynamics_jacobian(&s, &p);
        for j in 0..STATE_DIM {
            let h = 1e-6 * s.0[j].abs().max(1.0);
            let (mut sp, mut sm) = (s, s);
            sp.0[j] += h;
            sm.0[j] -= h;
            let fp = dynamics_rhs(&sp, &u, [0.3, 0.1, 0.0], 1.0, &p);
            let fm = dynamics_rhs(&sm, &u, [0.3, 0.1, 0.0], 1.0, &p);
            for i in 0..STATE_DIM {
                let fd = (fp.0[i] - fm.0[i]) / (2.0 * h);
                assert_abs_diff_eq!(jac.state[i][j], fd, epsilon = 1e-6 * fd.abs().max(1.0));
            }
        }
        for k in 0..CONTROL_DIM {
            assert_eq!(jac.control[idx::W1 + k][k], 1.0);
        }
    }
}
