//! Extended double-pole balancing.
//!
//! Two poles (the second with half the length and mass of the first) are
//! hinged on a cart that moves on a 4.8 m track. The controller only senses
//! the cart position and the two pole angles, so it has to infer velocities
//! from its own recurrent state. Every episode starts from randomized cart and
//! pole positions and velocities.
//!
//! Equations of motion (frictionless), with `ℓᵢ` the half pole length and
//! angles measured from the upright position:
//!
//! ```text
//! m̃ᵢ = mᵢ (1 - ¾ cos²θᵢ)
//! F̃ᵢ = mᵢ ℓᵢ θ̇ᵢ² sin θᵢ - ¾ mᵢ g sin θᵢ cos θᵢ
//! ẍ  = (F + Σ F̃ᵢ) / (M + Σ m̃ᵢ)
//! θ̈ᵢ = -(3 / 4ℓᵢ) (ẍ cos θᵢ - g sin θᵢ)
//! ```
//!
//! This is the classic formulation where gravity enters with a negative sign
//! (`g = -9.8`), written here with `g = 9.8`.

use std::f64::consts::PI;
use std::io::{self, Write};

use log::warn;

use super::{check_conditions, EnvError, Environment};
use crate::net::{Controller, NetworkTopology};
use crate::protocol::ConditionRanges;

pub const CONTROL_STEPS: usize = 1000;
pub const SUBSTEPS: usize = 2;
pub const DT: f64 = 0.01;
pub const X_LIMIT: f64 = 2.4;
pub const ANGLE_LIMIT: f64 = PI / 5.0;
pub const MAX_FORCE: f64 = 10.0;

/// Sensor range endpoint for the pole angles, in radians.
pub const ANGLE_SENSOR_LIMIT: f64 = 5.0 * PI / 13.5;
pub const X_SENSOR_LIMIT: f64 = 0.5;

/// Initial-state intervals in condition order `x, ẋ, θ₁, θ̇₁, θ₂, θ̇₂`.
pub const INITIAL_RANGES: [(f64, f64); 6] = [
    (-1.944, 1.944),
    (-1.215, 1.215),
    (-0.0472, 0.0472),
    (-0.135088, 0.135088),
    (-0.10472, 0.10472),
    (-0.135088, 0.135088),
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicsParams {
    pub cart_mass: f64,
    pub pole_mass: [f64; 2],
    /// Full pole lengths.
    pub pole_length: [f64; 2],
    pub gravity: f64,
}

impl Default for PhysicsParams {
    fn default() -> Self {
        PhysicsParams {
            cart_mass: 1.0,
            pole_mass: [0.5, 0.25],
            pole_length: [1.0, 0.5],
            gravity: 9.8,
        }
    }
}

impl PhysicsParams {
    fn half_length(&self, i: usize) -> f64 {
        0.5 * self.pole_length[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPoleState {
    pub x: f64,
    pub x_dot: f64,
    pub theta1: f64,
    pub theta1_dot: f64,
    pub theta2: f64,
    pub theta2_dot: f64,
}

impl CartPoleState {
    pub fn from_array(a: [f64; 6]) -> Self {
        CartPoleState {
            x: a[0],
            x_dot: a[1],
            theta1: a[2],
            theta1_dot: a[3],
            theta2: a[4],
            theta2_dot: a[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.x,
            self.x_dot,
            self.theta1,
            self.theta1_dot,
            self.theta2,
            self.theta2_dot,
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    /// Cart on the track and both poles within the allowed angle.
    pub fn is_valid(&self) -> bool {
        self.x.abs() <= X_LIMIT
            && self.theta1.abs() <= ANGLE_LIMIT
            && self.theta2.abs() <= ANGLE_LIMIT
    }
}

/// Time derivative `(ẋ, ẍ, θ̇₁, θ̈₁, θ̇₂, θ̈₂)` under a constant force.
pub fn dynamics(params: &PhysicsParams, state: &CartPoleState, force: f64) -> [f64; 6] {
    derivative(params, &state.to_array(), force)
}

#[inline]
fn derivative(p: &PhysicsParams, s: &[f64; 6], force: f64) -> [f64; 6] {
    let g = p.gravity;
    let mut num = force;
    let mut den = p.cart_mass;
    let mut trig = [(0.0, 0.0); 2];
    for i in 0..2 {
        let (sin, cos) = s[2 + 2 * i].sin_cos();
        trig[i] = (sin, cos);
        let m = p.pole_mass[i];
        let l = p.half_length(i);
        let omega = s[3 + 2 * i];
        num += m * l * omega * omega * sin - 0.75 * m * g * sin * cos;
        den += m * (1.0 - 0.75 * cos * cos);
    }
    let x_acc = num / den;
    let mut out = [s[1], x_acc, s[3], 0.0, s[5], 0.0];
    for i in 0..2 {
        let (sin, cos) = trig[i];
        out[3 + 2 * i] = -0.75 / p.half_length(i) * (x_acc * cos - g * sin);
    }
    out
}

/// One classical Runge–Kutta step with the force held constant.
pub fn rk4_step(params: &PhysicsParams, state: &CartPoleState, force: f64, dt: f64) -> CartPoleState {
    let s = state.to_array();
    let add = |a: &[f64; 6], k: &[f64; 6], h: f64| -> [f64; 6] {
        std::array::from_fn(|i| a[i] + h * k[i])
    };
    let k1 = derivative(params, &s, force);
    let k2 = derivative(params, &add(&s, &k1, 0.5 * dt), force);
    let k3 = derivative(params, &add(&s, &k2, 0.5 * dt), force);
    let k4 = derivative(params, &add(&s, &k3, dt), force);
    CartPoleState::from_array(std::array::from_fn(|i| {
        s[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }))
}

/// Total mechanical energy; each pole is a uniform rod.
pub fn mechanical_energy(params: &PhysicsParams, s: &CartPoleState) -> f64 {
    let mut e = 0.5 * params.cart_mass * s.x_dot * s.x_dot;
    for (i, (theta, omega)) in [(s.theta1, s.theta1_dot), (s.theta2, s.theta2_dot)]
        .into_iter()
        .enumerate()
    {
        let m = params.pole_mass[i];
        let l = params.half_length(i);
        let (sin, cos) = theta.sin_cos();
        let vx = s.x_dot + l * omega * cos;
        let vy = -l * omega * sin;
        e += 0.5 * m * (vx * vx + vy * vy)
            + 0.5 * (m * l * l / 3.0) * omega * omega
            + m * params.gravity * l * cos;
    }
    e
}

/// Cart position and pole angles scaled so the failure limits map onto the
/// sensor range endpoints.
pub fn sensors(state: &CartPoleState) -> [f64; 3] {
    let angle_gain = ANGLE_SENSOR_LIMIT / ANGLE_LIMIT;
    [
        state.x * (X_SENSOR_LIMIT / X_LIMIT),
        state.theta1 * angle_gain,
        state.theta2 * angle_gain,
    ]
}

pub fn motor_to_force(motor: f64) -> f64 {
    (2.0 * motor - 1.0) * MAX_FORCE
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub state: CartPoleState,
    pub force: f64,
}

#[derive(Debug, Clone, Default)]
pub struct DoublePole {
    pub params: PhysicsParams,
}

impl DoublePole {
    pub fn new() -> Self {
        Self::default()
    }

    fn simulate<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> Result<f64, EnvError> {
        check_conditions(&self.condition_ranges(), conditions)?;
        let mut ctrl = controller.clone();
        ctrl.reset();
        let mut state = CartPoleState::from_array(conditions.try_into().expect("length checked"));
        let mut motor = [0.0];
        let mut survived = 0usize;
        for step in 0..CONTROL_STEPS {
            ctrl.act(&sensors(&state), &mut motor);
            let force = motor_to_force(motor[0]);
            if let Some(t) = trace.as_deref_mut() {
                t.push(TraceRow { step, state, force });
            }
            for _ in 0..SUBSTEPS {
                state = rk4_step(&self.params, &state, force, DT);
            }
            if !state.is_finite() {
                warn!("double-pole physics diverged at step {step}; scoring episode 0");
                return Ok(0.0);
            }
            if !state.is_valid() {
                break;
            }
            survived += 1;
        }
        Ok(survived as f64 / CONTROL_STEPS as f64)
    }

    pub fn run_episode_traced<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<(f64, Vec<TraceRow>), EnvError> {
        let mut rows = Vec::new();
        let f = self.simulate(controller, conditions, Some(&mut rows))?;
        Ok((f, rows))
    }
}

pub fn write_trace_csv<W: Write>(mut out: W, rows: &[TraceRow]) -> io::Result<()> {
    writeln!(out, "step,x,x_dot,theta1,theta1_dot,theta2,theta2_dot,force")?;
    for r in rows {
        let s = r.state;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step, s.x, s.x_dot, s.theta1, s.theta1_dot, s.theta2, s.theta2_dot, r.force
        )?;
    }
    Ok(())
}

impl Environment for DoublePole {
    fn name(&self) -> &'static str {
        "cartpole2"
    }

    fn topology(&self) -> NetworkTopology {
        NetworkTopology {
            n_sensors: 3,
            n_internal: 10,
            n_motors: 1,
        }
    }

    fn condition_ranges(&self) -> ConditionRanges {
        ConditionRanges::new(INITIAL_RANGES.to_vec()).expect("constant ranges are valid")
    }

    fn run_episode<C: Controller + Clone>(
        &self,
        controller: &C,
        conditions: &[f64],
    ) -> Result<f64, EnvError> {
        self.simulate(controller, conditions, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Network;

    fn zero_net() -> Network {
        Network::zeros(DoublePole::new().topology())
    }

    #[derive(Clone)]
    struct Mirror(f64);
    impl Controller for Mirror {
        fn reset(&mut self) {}
        fn act(&mut self, sensors: &[f64], motors: &mut [f64]) {
            // anti-symmetric in the sensors around motor 0.5
            let u = self.0 * (sensors[0] + 3.0 * sensors[1] - 2.0 * sensors[2]);
            motors[0] = 0.5 + 0.5 * u.tanh();
        }
    }

    #[test]
    fn equilibrium_has_zero_derivative() {
        let d = dynamics(&PhysicsParams::default(), &CartPoleState::default(), 0.0);
        assert_eq!(d, [0.0; 6]);
    }

    #[test]
    fn push_from_rest() {
        let d = dynamics(&PhysicsParams::default(), &CartPoleState::default(), 10.0);
        let x_acc = 10.0 / (1.0 + 0.125 + 0.0625);
        assert!((d[1] - x_acc).abs() < 1e-12);
        assert!((d[1] - 8.421_052_631_578_947).abs() < 1e-12);
        assert!((d[3] + 1.5 * x_acc).abs() < 1e-12);
        assert!((d[5] + 3.0 * x_acc).abs() < 1e-12);
    }

    #[test]
    fn dynamics_are_odd() {
        let p = PhysicsParams::default();
        let s = CartPoleState::from_array([0.3, -0.2, 0.1, 0.05, -0.04, 0.2]);
        let m = CartPoleState::from_array(s.to_array().map(|v| -v));
        let a = dynamics(&p, &s, 3.5);
        let b = dynamics(&p, &m, -3.5);
        for i in 0..6 {
            assert_eq!(a[i], -b[i]);
        }
    }

    #[test]
    fn upright_is_unstable() {
        let p = PhysicsParams::default();
        let s = CartPoleState {
            theta2: 0.01,
            ..Default::default()
        };
        assert!(dynamics(&p, &s, 0.0)[5] > 0.0);
    }

    #[test]
    fn zero_state_stays_put() {
        let p = PhysicsParams::default();
        for dt in [0.001, 0.01, 0.05] {
            assert_eq!(rk4_step(&p, &CartPoleState::default(), 0.0, dt), CartPoleState::default());
        }
    }

    #[test]
    fn energy_drift_over_ten_seconds() {
        let p = PhysicsParams::default();
        let mut s = CartPoleState {
            theta2: 0.05,
            ..Default::default()
        };
        let e0 = mechanical_energy(&p, &s);
        for _ in 0..1000 {
            s = rk4_step(&p, &s, 0.0, 0.01);
        }
        let drift = ((mechanical_energy(&p, &s) - e0) / e0).abs();
        assert!(drift < 1e-6, "relative drift {drift:e}");
    }

    #[test]
    fn fourth_order_convergence() {
        let p = PhysicsParams::default();
        let start = CartPoleState {
            theta2: 0.05,
            ..Default::default()
        };
        let run = |dt: f64, steps: usize| {
            let mut s = start;
            for _ in 0..steps {
                s = rk4_step(&p, &s, 0.0, dt);
            }
            s.to_array()
        };
        let coarse = run(0.01, 100);
        let fine = run(0.005, 200);
        let finer = run(0.0025, 400);
        for i in 0..6 {
            let d1 = (coarse[i] - fine[i]).abs();
            let d2 = (fine[i] - finer[i]).abs();
            // the short pole has swung past π by t = 1 s, so scale by magnitude
            assert!(d1 < 1e-6 * coarse[i].abs().max(1.0), "component {i}: {d1:e}");
            let ratio = d1 / d2;
            assert!((12.0..20.0).contains(&ratio), "component {i}: error ratio {ratio}");
        }
    }

    #[test]
    fn sensor_scaling() {
        assert_eq!(sensors(&CartPoleState::default()), [0.0, 0.0, 0.0]);
        let s = CartPoleState {
            x: 2.4,
            theta1: PI / 5.0,
            theta2: -PI / 5.0,
            ..Default::default()
        };
        let v = sensors(&s);
        assert!((v[0] - 0.5).abs() < 1e-15);
        assert!((v[1] - 5.0 * PI / 13.5).abs() < 1e-12);
        assert!((v[1] - 1.1636).abs() < 1e-4);
        assert!((v[2] + 5.0 * PI / 13.5).abs() < 1e-12);
    }

    #[test]
    fn zero_controller_balances_equilibrium() {
        let f = DoublePole::new().run_episode(&zero_net(), &[0.0; 6]).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn unactuated_short_pole_falls() {
        let f = DoublePole::new()
            .run_episode(&zero_net(), &[0.0, 0.0, 0.0, 0.0, 0.10472, 0.0])
            .unwrap();
        assert!(f < 0.25, "fitness {f}");
        assert_eq!(f, GOLDEN_SHORT_POLE_FALL);
    }

    /// Frozen from the simulation: the short pole leaves ±π/5 after this many
    /// control steps.
    const GOLDEN_SHORT_POLE_FALL: f64 = 0.021;

    #[test]
    fn mirrored_conditions_give_equal_fitness() {
        let env = DoublePole::new();
        let c = [0.5, -0.3, 0.02, 0.1, -0.05, 0.03];
        let m = c.map(|v| -v);
        for gain in [0.0, 0.5, 2.0, 8.0] {
            let (fa, ta) = env.run_episode_traced(&Mirror(gain), &c).unwrap();
            let (fb, tb) = env.run_episode_traced(&Mirror(gain), &m).unwrap();
            assert_eq!(fa, fb);
            assert_eq!(ta.len(), tb.len());
            for (a, b) in ta.iter().zip(&tb) {
                for (u, v) in a.state.to_array().iter().zip(b.state.to_array()) {
                    assert!((u + v).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn fitness_is_quantized() {
        let env = DoublePole::new();
        let ctrl = Mirror(1.5);
        for c in [[0.1, 0.2, 0.01, 0.0, 0.02, -0.1], [1.9, 1.2, 0.04, 0.13, 0.1, 0.13]] {
            let f = env.run_episode(&ctrl, &c).unwrap();
            let k = (f * 1000.0).round();
            assert_eq!(k / 1000.0, f);
            assert!((0.0..=1.0).contains(&f));
        }
    }

    #[test]
    fn rejects_out_of_range_conditions() {
        let env = DoublePole::new();
        assert!(env.run_episode(&zero_net(), &[3.0, 0.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(env.run_episode(&zero_net(), &[0.0; 5]).is_err());
    }
}
