//! Model, wind, power and baseline invariants over random inputs.

mod support;

use proptest::prelude::*;
use quad_energy::config::RunConfig;
use quad_energy::model::{control_map, dynamics_rhs, gyro_speed, hover_speed, idx, AuxControl, QuadrotorParams, State16};
use quad_energy::output::{trajectory_csv, TRAJECTORY_COLUMNS};
use quad_energy::power::{
    motor_steady_state, power_integrand, trajectory_energy, BatteryParams, BatteryState, EfficiencySpec, Sample,
};
use quad_energy::sim::{simulate_baseline, BaselineGains};
use quad_energy::ocp::MissionSpec;
use quad_energy::wind::{axis_wind, Harmonic, WindAxisParams};
use support::phantom_scenario;

fn rotor_speeds() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(300.0f64..1200.0)
}

fn state_with(w: [f64; 4], attitude: [f64; 3], rates: [f64; 3]) -> State16 {
    let mut s = State16::hover_at([0.0; 3], 0.0);
    s.0[idx::W1..=idx::W4].copy_from_slice(&w);
    s.0[idx::PHI] = attitude[0];
    s.0[idx::THETA] = attitude[1];
    s.0[idx::PSI] = attitude[2];
    s.0[idx::PHIDOT] = rates[0];
    s.0[idx::THETADOT] = rates[1];
    s.0[idx::PSIDOT] = rates[2];
    s
}

/// Rate-dependent part of the angular accelerations.
fn rate_terms(w: [f64; 4], rates: [f64; 3], p: &QuadrotorParams) -> [f64; 2] {
    let u = AuxControl::zeros();
    let with = dynamics_rhs(&state_with(w, [0.0; 3], rates), &u, [0.0; 3], 1.0, p);
    let without = dynamics_rhs(&state_with(w, [0.0; 3], [0.0; 3]), &u, [0.0; 3], 1.0, p);
    [with.0[idx::PHIDOT] - without.0[idx::PHIDOT], with.0[idx::THETADOT] - without.0[idx::THETADOT]]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn wrench_depends_on_squares_only(w in rotor_speeds()) {
        let p = QuadrotorParams::default();
        let a = control_map(w, &p).unwrap();
        let s = state_with(w.map(|v| -v), [0.0; 3], [0.0; 3]);
        let b = dynamics_rhs(&s, &AuxControl::zeros(), [0.0; 3], 1.0, &p);
        let c = dynamics_rhs(&state_with(w, [0.0; 3], [0.0; 3]), &AuxControl::zeros(), [0.0; 3], 1.0, &p);
        prop_assert_eq!(b.0[idx::ZDOT].to_bits(), c.0[idx::ZDOT].to_bits());
        prop_assert!((c.0[idx::ZDOT] - (a.u1 / p.m - p.g)).abs() < 1e-12);
    }

    #[test]
    fn level_weight_balancing_thrust_holds_altitude(
        dir in prop::array::uniform4(0.5f64..1.5),
        yaw in -3.0f64..3.0,
        rates in prop::array::uniform3(-1.0f64..1.0),
    ) {
        let p = QuadrotorParams::default();
        let norm: f64 = dir.iter().map(|d| d * d).sum::<f64>().sqrt();
        let w = dir.map(|d| d / norm * 2.0 * hover_speed(&p));
        prop_assert!((control_map(w, &p).unwrap().u1 - p.m * p.g).abs() < 1e-9);
        let d = dynamics_rhs(&state_with(w, [0.0, 0.0, yaw], rates), &AuxControl::zeros(), [0.0; 3], 1.0, &p);
        prop_assert!(d.0[idx::ZDOT].abs() < 1e-12);
    }

    #[test]
    fn gyroscopic_terms_flip_under_rotor_swap(w in rotor_speeds(), rates in prop::array::uniform3(-2.0f64..2.0)) {
        let p = QuadrotorParams::default();
        let swapped = [w[1], w[0], w[3], w[2]];
        prop_assert!((gyro_speed(w) + gyro_speed(swapped)).abs() < 1e-9);
        let level = [hover_speed(&p); 4];
        let cross = rate_terms(level, rates, &p);
        let a = rate_terms(w, rates, &p);
        let b = rate_terms(swapped, rates, &p);
        for i in 0..2 {
            let (ga, gb) = (a[i] - cross[i], b[i] - cross[i]);
            prop_assert!((ga + gb).abs() <= 1e-12 * (1.0 + ga.abs()), "row {}: {} vs {}", i, ga, gb);
        }
    }

    #[test]
    fn wind_stays_within_its_envelope(
        t in -50.0f64..200.0,
        v0 in -3.0f64..3.0,
        amps in prop::array::uniform3(-1.0f64..1.0),
        omegas in prop::array::uniform3(0.0f64..3.0),
        v_gmax in 0.0f64..1.0,
        t_g in 0.5f64..20.0,
    ) {
        let harmonics = [0, 1, 2].map(|k| Harmonic { omega: omegas[k], amplitude: amps[k] });
        let axis = WindAxisParams { v0, harmonics, v_gmax, t_g };
        let bound = amps.iter().map(|a| a.abs()).sum::<f64>() + 2.0 * v_gmax;
        prop_assert!((axis_wind(t, &axis) - v0).abs() <= bound + 1e-12);
    }

    #[test]
    fn power_is_never_negative(w in rotor_speeds(), a in prop::array::uniform4(-4000.0f64..4000.0)) {
        let m = phantom_scenario(2, false).vehicle.motor;
        prop_assert!(power_integrand(w, a, &EfficiencySpec::default(), &m) >= 0.0);
        prop_assert!(power_integrand(w, a, &EfficiencySpec::constant(0.6), &m) >= 0.0);
    }

    #[test]
    fn steady_torque_is_drag(omega in 0.0f64..1500.0) {
        let m = phantom_scenario(2, false).vehicle.motor;
        let (torque, _, _) = motor_steady_state(omega, 0.0, &m).unwrap();
        prop_assert_eq!(torque, m.kappa * omega * omega);
    }

    #[test]
    fn open_circuit_voltage_decreases(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let p = BatteryParams::default();
        let (lo, hi) = (a.min(b) * p.q_bat * 0.999, a.max(b) * p.q_bat * 0.999);
        prop_assume!(hi - lo > 1e-9);
        let (x, y) = (BatteryState::at(lo, 0.0, &p).unwrap(), BatteryState::at(hi, 0.0, &p).unwrap());
        prop_assert!(y.e_m < x.e_m);
    }
}

#[test]
fn fresh_cell_is_full() {
    assert_eq!(BatteryState::fresh(&BatteryParams::default()).soc, 100.0);
}

/// `w = wh (1 + 0.1 sin t)` with its exact rotor acceleration.
fn smooth_trace(dt: f64) -> Vec<Sample> {
    let wh = hover_speed(&QuadrotorParams::default());
    let n = (4.0 / dt).round() as usize;
    (0..=n)
        .map(|k| {
            let t = k as f64 * dt;
            let w = wh * (1.0 + 0.1 * t.sin());
            Sample { t, state: State16::hover_at([0.0; 3], w), control: AuxControl([wh * 0.1 * t.cos(); 4]) }
        })
        .collect()
}

#[test]
fn energy_quadrature_is_second_order() {
    let m = phantom_scenario(2, false).vehicle.motor;
    let eff = EfficiencySpec::default();
    let e: Vec<f64> = [0.1, 0.05, 0.025].iter().map(|dt| trajectory_energy(&smooth_trace(*dt), &eff, &m).unwrap()).collect();
    let ratio = (e[1] - e[0]) / (e[2] - e[1]);
    assert!((3.5..=4.5).contains(&ratio), "{e:?} ratio {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn baseline_energy_is_yaw_symmetric(a in -6.0f64..6.0, b in -6.0f64..6.0, c in -3.0f64..6.0) {
        let sc = phantom_scenario(2, false);
        let p = sc.vehicle.params;
        let fly = |to: [f64; 3]| {
            let m = MissionSpec::hover_to_hover([0.0; 3], to, 0.0, 10.0, &p);
            let r = simulate_baseline(&m, &sc.vehicle, None, &BaselineGains::default()).unwrap();
            trajectory_energy(&r.samples, &sc.efficiency, &sc.vehicle.motor).unwrap()
        };
        let (e1, e2) = (fly([a, b, c]), fly([-b, a, c]));
        prop_assert!((e1 - e2).abs() <= 1e-3 * e1, "{} vs {}", e1, e2);
    }

    #[test]
    fn config_round_trips(
        m in 0.5f64..2.2,
        tf in 2.0f64..20.0,
        to in prop::array::uniform3(-10.0f64..10.0),
        n in 2usize..400,
        wind in any::<bool>(),
        gain in 0.1f64..2.0,
    ) {
        let mut cfg = RunConfig::default();
        cfg.vehicle.m = m;
        cfg.mission.tf = tf;
        cfg.mission.xf.position = to;
        cfg.grid.n_intervals = n;
        cfg.wind.enabled = wind;
        cfg.wind.gain = gain;
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn csv_header_is_fixed() {
    let sc = phantom_scenario(2, false);
    let v = &sc.vehicle;
    let csv = trajectory_csv(&smooth_trace(0.5), &sc.efficiency, &v.motor, &v.battery).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, TRAJECTORY_COLUMNS.join(","));
    assert_eq!(
        header,
        "t,x1,x2,x3,x4,x5,x6,x7,x8,x9,x10,x11,x12,x13,x14,x15,x16,\
         alpha1,alpha2,alpha3,alpha4,P_total_W,E_cum_J,i_bat_A,v_bat_V,soc_pct"
    );
}
