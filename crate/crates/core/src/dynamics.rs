//! Nonlinear quadrotor plant.
//!
//! Translational dynamics include a body-frame rotor-drag force linear in
//! velocity; rotational dynamics include gyroscopic coupling and drag
//! moments linear in velocity and angular velocity:
//!
//! ```text
//!   v̇ = g_a + C·1₃·f/m − (1/m)·C·D·Cᵀ·v
//!   ω̇ = J⁻¹ (m_r − ω^× J ω − E·Cᵀ·v − F·ω)
//!   ṙ = v,   Ċ = C·ω^×
//! ```
//!
//! Integration is classical RK4 on the flat components with the attitude
//! re-projected onto SO(3) after each step.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::lie::{skew, PoseSE23, Rotation};

#[derive(Debug, Error)]
pub enum ParamError {
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("inertia matrix must be symmetric positive definite")]
    BadInertia,
    #[error("drag matrix D must be diagonal with nonnegative entries")]
    BadDrag,
}

/// Physical parameters of the vehicle.
///
/// `Default` is the benchmark quadrotor used throughout the test suite and
/// the simulation studies.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadParams {
    /// Mass, kg.
    pub mass: f64,
    /// Second moment of mass in the body frame, kg·m².
    pub inertia: Matrix3<f64>,
    /// Rotor-drag coefficients (diagonal), 1/s.
    pub drag_d: Matrix3<f64>,
    /// Rotational drag in velocity, N/s.
    pub drag_e: Matrix3<f64>,
    /// Rotational drag in angular velocity, N·m·s/rad.
    pub drag_f: Matrix3<f64>,
    /// Gravitational acceleration, m/s².
    pub gravity: f64,
}

impl Default for QuadParams {
    fn default() -> Self {
        QuadParams {
            mass: 1.1,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.0112, 0.01123, 0.02108)),
            drag_d: Matrix3::from_diagonal(&Vector3::new(0.605, 0.44, 0.275)),
            drag_e: Matrix3::from_diagonal(&Vector3::new(0.05, 0.05, 0.05)),
            drag_f: Matrix3::from_diagonal(&Vector3::new(0.1, 0.1, 0.1)),
            gravity: 9.81,
        }
    }
}

impl QuadParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.mass > 0.0) {
            return Err(ParamError::NonPositiveMass(self.mass));
        }
        let sym = (self.inertia - self.inertia.transpose()).abs().max();
        if sym > 1e-12 || self.inertia.symmetric_eigenvalues().min() <= 0.0 {
            return Err(ParamError::BadInertia);
        }
        for i in 0..3 {
            for j in 0..3 {
                let v = self.drag_d[(i, j)];
                if (i == j && v < 0.0) || (i != j && v != 0.0) {
                    return Err(ParamError::BadDrag);
                }
            }
        }
        Ok(())
    }

    /// Gravity vector resolved in the inertial frame, [0, 0, −g].
    pub fn gravity_vec(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.gravity)
    }

    /// Copy with the translational drag matrix zeroed.
    pub fn drag_free(&self) -> QuadParams {
        QuadParams {
            drag_d: Matrix3::zeros(),
            ..*self
        }
    }
}

/// Full plant state: pose on SE₂(3) plus body angular velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantState {
    pub pose: PoseSE23,
    /// Body angular velocity, rad/s.
    pub omega_b: Vector3<f64>,
}

/// Wrench applied by the rotors: collective thrust along the body 3-axis
/// and a body-frame moment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WrenchInput {
    /// Collective thrust, N.
    pub thrust: f64,
    /// Control moment, N·m.
    pub moment: Vector3<f64>,
}

/// Time derivative of the plant state with the attitude in raw matrix form.
#[derive(Clone, Copy, Debug)]
pub struct StateDerivative {
    pub rotation_dot: Matrix3<f64>,
    pub velocity_dot: Vector3<f64>,
    pub position_dot: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

fn derivative_raw(
    c: &Matrix3<f64>,
    v: &Vector3<f64>,
    omega: &Vector3<f64>,
    input: &WrenchInput,
    params: &QuadParams,
) -> StateDerivative {
    let thrust_body = Vector3::new(0.0, 0.0, input.thrust);
    let velocity_dot = params.gravity_vec() + (c * thrust_body) / params.mass
        - (c * params.drag_d * c.transpose() * v) / params.mass;
    let gyro = skew(omega) * (params.inertia * omega);
    let torque = input.moment - gyro - params.drag_e * (c.transpose() * v)
        - params.drag_f * omega;
    let omega_dot = params
        .inertia
        .try_inverse()
        .expect("inertia is positive definite")
        * torque;
    StateDerivative {
        rotation_dot: c * skew(omega),
        velocity_dot,
        position_dot: *v,
        omega_dot,
    }
}

/// Evaluates the equations of motion at the given state and input.
///
/// Pure and deterministic; does not mutate its arguments.
pub fn eval_derivative(
    state: &PlantState,
    input: &WrenchInput,
    params: &QuadParams,
) -> StateDerivative {
    derivative_raw(
        state.pose.rotation.matrix(),
        &state.pose.velocity,
        &state.omega_b,
        input,
        params,
    )
}

/// One classical RK4 step with the input held constant, followed by
/// re-projection of the attitude onto SO(3).
pub fn integrate_step(
    state: &PlantState,
    input: &WrenchInput,
    params: &QuadParams,
    dt: f64,
) -> PlantState {
    debug_assert!(dt > 0.0);
    let c0 = *state.pose.rotation.matrix();
    let v0 = state.pose.velocity;
    let r0 = state.pose.position;
    let w0 = state.omega_b;

    let k1 = derivative_raw(&c0, &v0, &w0, input, params);
    let k2 = derivative_raw(
        &(c0 + k1.rotation_dot * (dt / 2.0)),
        &(v0 + k1.velocity_dot * (dt / 2.0)),
        &(w0 + k1.omega_dot * (dt / 2.0)),
        input,
        params,
    );
    let k3 = derivative_raw(
        &(c0 + k2.rotation_dot * (dt / 2.0)),
        &(v0 + k2.velocity_dot * (dt / 2.0)),
        &(w0 + k2.omega_dot * (dt / 2.0)),
        input,
        params,
    );
    let k4 = derivative_raw(
        &(c0 + k3.rotation_dot * dt),
        &(v0 + k3.velocity_dot * dt),
        &(w0 + k3.omega_dot * dt),
        input,
        params,
    );

    let sixth = dt / 6.0;
    let c = c0 + (k1.rotation_dot + k2.rotation_dot * 2.0 + k3.rotation_dot * 2.0 + k4.rotation_dot) * sixth;
    let v = v0 + (k1.velocity_dot + k2.velocity_dot * 2.0 + k3.velocity_dot * 2.0 + k4.velocity_dot) * sixth;
    let r = r0 + (k1.position_dot + k2.position_dot * 2.0 + k3.position_dot * 2.0 + k4.position_dot) * sixth;
    let w = w0 + (k1.omega_dot + k2.omega_dot * 2.0 + k3.omega_dot * 2.0 + k4.omega_dot) * sixth;

    // Note: k2/k3 position slopes use the mid-point velocities, so position
    // keeps full 4th order through the (v, r) chain.
    PlantState {
        pose: PoseSE23::new(Rotation::project(&c), v, r),
        omega_b: w,
    }
}

/// The command triple produced by the outer and inner control loops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActuatorCommand {
    /// Collective thrust, N.
    pub thrust: f64,
    /// Body moment, N·m.
    pub moment: Vector3<f64>,
    /// Commanded body angular velocity, rad/s.
    pub omega_cmd: Vector3<f64>,
}

impl ActuatorCommand {
    pub fn wrench(&self) -> WrenchInput {
        WrenchInput {
            thrust: self.thrust,
            moment: self.moment,
        }
    }
}

/// First-order actuator lag applied per channel,
/// y_{k+1} = y_k + (dt/τ)(u_k − y_k). τ = 0 is a pass-through.
///
/// The internal state latches onto the first commanded value so a run does
/// not begin with a spin-up transient.
#[derive(Clone, Debug)]
pub struct ActuatorFilter {
    tau: f64,
    state: Option<ActuatorCommand>,
}

impl ActuatorFilter {
    pub fn new(tau: f64) -> Self {
        debug_assert!(tau >= 0.0);
        ActuatorFilter { tau, state: None }
    }

    pub fn filter(&mut self, command: &ActuatorCommand, dt: f64) -> ActuatorCommand {
        if self.tau == 0.0 {
            return *command;
        }
        let prev = self.state.unwrap_or(*command);
        let alpha = dt / self.tau;
        let next = ActuatorCommand {
            thrust: prev.thrust + alpha * (command.thrust - prev.thrust),
            moment: prev.moment + alpha * (command.moment - prev.moment),
            omega_cmd: prev.omega_cmd + alpha * (command.omega_cmd - prev.omega_cmd),
        };
        self.state = Some(next);
        next
    }
}

/// Componentwise output limits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SaturationLimits {
    /// Upper thrust bound, N (lower bound is 0).
    pub thrust_max: f64,
    /// Per-axis angular-velocity command bound, rad/s.
    pub omega_max: f64,
    /// Per-axis moment bound, N·m.
    pub moment_max: f64,
}

impl SaturationLimits {
    /// Defaults: thrust in [0, 4·m·g], ω command in ±8 rad/s, moment in ±1 N·m.
    pub fn for_params(params: &QuadParams) -> Self {
        SaturationLimits {
            thrust_max: 4.0 * params.mass * params.gravity,
            omega_max: 8.0,
            moment_max: 1.0,
        }
    }
}

/// Clamps a command to the configured limits.
pub fn saturate(command: &ActuatorCommand, limits: &SaturationLimits) -> ActuatorCommand {
    ActuatorCommand {
        thrust: command.thrust.clamp(0.0, limits.thrust_max),
        moment: command.moment.map(|m| m.clamp(-limits.moment_max, limits.moment_max)),
        omega_cmd: command
            .omega_cmd
            .map(|w| w.clamp(-limits.omega_max, limits.omega_max)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::orthonormality_defect;
    use approx::assert_relative_eq;

    fn hover_state() -> PlantState {
        PlantState {
            pose: PoseSE23::identity(),
            omega_b: Vector3::zeros(),
        }
    }

    #[test]
    fn hover_has_zero_derivative() {
        let p = QuadParams::default();
        let input = WrenchInput {
            thrust: p.mass * p.gravity,
            moment: Vector3::zeros(),
        };
        let d = eval_derivative(&hover_state(), &input, &p);
        assert_relative_eq!(d.velocity_dot, Vector3::zeros(), epsilon = 1e-14);
        assert_relative_eq!(d.omega_dot, Vector3::zeros(), epsilon = 1e-14);
        assert_eq!(d.position_dot, Vector3::zeros());
        assert_eq!(d.rotation_dot, Matrix3::zeros());
    }

    #[test]
    fn free_fall_acceleration() {
        let p = QuadParams::default();
        let input = WrenchInput {
            thrust: 0.0,
            moment: Vector3::zeros(),
        };
        let d = eval_derivative(&hover_state(), &input, &p);
        assert_relative_eq!(d.velocity_dot, Vector3::new(0.0, 0.0, -9.81), epsilon = 1e-15);
    }

    #[test]
    fn drag_decelerates_forward_flight() {
        let p = QuadParams::default();
        let mut state = hover_state();
        state.pose.velocity = Vector3::new(1.0, 0.0, 0.0);
        let input = WrenchInput {
            thrust: 0.0,
            moment: Vector3::zeros(),
        };
        let d = eval_derivative(&state, &input, &p);
        // d_x / m = 0.605 / 1.1
        assert_relative_eq!(d.velocity_dot.x, -0.55, epsilon = 1e-12);
    }

    #[test]
    fn hover_equilibrium_is_fixed_point() {
        let p = QuadParams::default();
        let input = WrenchInput {
            thrust: p.mass * p.gravity,
            moment: Vector3::zeros(),
        };
        let next = integrate_step(&hover_state(), &input, &p, 0.01);
        assert!((next.pose.matrix() - hover_state().pose.matrix()).abs().max() < 1e-12);
        assert!(next.omega_b.norm() < 1e-12);
    }

    #[test]
    fn ballistic_step_matches_closed_form() {
        let p = QuadParams::default().drag_free();
        let input = WrenchInput {
            thrust: 0.0,
            moment: Vector3::zeros(),
        };
        let next = integrate_step(&hover_state(), &input, &p, 0.1);
        assert_relative_eq!(next.pose.velocity.z, -0.981, epsilon = 1e-6);
        assert_relative_eq!(next.pose.position.z, -0.04905, epsilon = 1e-6);
    }

    #[test]
    fn rk4_order_on_generic_motion() {
        let p = QuadParams::default();
        let state = PlantState {
            pose: PoseSE23::new(
                crate::lie::so3_exp(&Vector3::new(0.1, -0.05, 0.2)),
                Vector3::new(3.0, 0.0, 0.5),
                Vector3::new(0.0, 3.0, 0.0),
            ),
            omega_b: Vector3::new(0.3, -0.2, 1.0),
        };
        let input = WrenchInput {
            thrust: 1.2 * p.mass * p.gravity,
            moment: Vector3::new(0.02, -0.01, 0.005),
        };
        let run = |dt: f64| {
            let steps = (0.4 / dt).round() as usize;
            let mut s = state;
            for _ in 0..steps {
                s = integrate_step(&s, &input, &p, dt);
            }
            s
        };
        let reference = run(0.4 / 4096.0);
        let err = |s: &PlantState| {
            (s.pose.position - reference.pose.position).norm()
                + (s.pose.velocity - reference.pose.velocity).norm()
                + (s.omega_b - reference.omega_b).norm()
        };
        let e_coarse = err(&run(0.4 / 32.0));
        let e_fine = err(&run(0.4 / 64.0));
        let ratio = e_coarse / e_fine;
        assert!(
            (8.0..40.0).contains(&ratio),
            "expected ~16x error reduction, got {ratio}"
        );
    }

    #[test]
    fn attitude_stays_orthonormal_over_long_run() {
        let p = QuadParams::default();
        let input = WrenchInput {
            thrust: p.mass * p.gravity,
            moment: Vector3::new(0.003, -0.002, 0.004),
        };
        let mut s = hover_state();
        let dt = 5e-4;
        for _ in 0..20_000 {
            s = integrate_step(&s, &input, &p, dt);
        }
        assert!(orthonormality_defect(s.pose.rotation.matrix()) < 1e-9);
    }

    #[test]
    fn translational_energy_conserved_without_forcing() {
        let p = QuadParams {
            drag_d: Matrix3::zeros(),
            ..QuadParams::default()
        };
        let input = WrenchInput {
            thrust: 0.0,
            moment: Vector3::zeros(),
        };
        let mut s = hover_state();
        s.pose.velocity = Vector3::new(4.0, -2.0, 10.0);
        let energy =
            |s: &PlantState| 0.5 * s.pose.velocity.norm_squared() + p.gravity * s.pose.position.z;
        let e0 = energy(&s);
        for _ in 0..20_000 {
            s = integrate_step(&s, &input, &p, 5e-4);
        }
        assert!((energy(&s) - e0).abs() / e0.abs() < 1e-6);
    }

    #[test]
    fn derivative_is_deterministic() {
        let p = QuadParams::default();
        let state = PlantState {
            pose: PoseSE23::new(
                crate::lie::so3_exp(&Vector3::new(0.3, 0.1, -0.2)),
                Vector3::new(1.0, 2.0, 3.0),
                Vector3::new(-1.0, 0.0, 1.0),
            ),
            omega_b: Vector3::new(0.5, -0.5, 0.25),
        };
        let input = WrenchInput {
            thrust: 7.0,
            moment: Vector3::new(0.1, 0.0, -0.1),
        };
        let a = eval_derivative(&state, &input, &p);
        let b = eval_derivative(&state, &input, &p);
        assert_eq!(a.velocity_dot, b.velocity_dot);
        assert_eq!(a.omega_dot, b.omega_dot);
        assert_eq!(a.rotation_dot, b.rotation_dot);
    }

    #[test]
    fn actuator_passthrough_at_zero_tau() {
        let mut f = ActuatorFilter::new(0.0);
        let cmd = ActuatorCommand {
            thrust: 5.0,
            moment: Vector3::new(0.1, 0.2, 0.3),
            omega_cmd: Vector3::new(1.0, -1.0, 0.5),
        };
        assert_eq!(f.filter(&cmd, 0.0025), cmd);
    }

    #[test]
    fn actuator_step_response() {
        let tau = 0.02;
        let dt = 1e-4;
        let mut f = ActuatorFilter::new(tau);
        let zero = ActuatorCommand {
            thrust: 0.0,
            moment: Vector3::zeros(),
            omega_cmd: Vector3::zeros(),
        };
        // latch the state at zero, then apply a unit step
        f.filter(&zero, dt);
        let step = ActuatorCommand {
            thrust: 1.0,
            ..zero
        };
        let mut out = zero;
        for _ in 0..((tau / dt).round() as usize) {
            out = f.filter(&step, dt);
        }
        let expected = 1.0 - (-1.0f64).exp(); // 0.632...
        assert!((out.thrust - expected).abs() / expected < 0.02);
    }

    #[test]
    fn actuator_decay_rate() {
        let tau = 0.05;
        let dt = 1e-4;
        let mut f = ActuatorFilter::new(tau);
        let one = ActuatorCommand {
            thrust: 1.0,
            moment: Vector3::zeros(),
            omega_cmd: Vector3::zeros(),
        };
        f.filter(&one, dt); // latch at 1
        let zero = ActuatorCommand {
            thrust: 0.0,
            ..one
        };
        let mut out = one;
        for _ in 0..((2.0 * tau / dt).round() as usize) {
            out = f.filter(&zero, dt);
        }
        assert!((out.thrust - (-2.0f64).exp()).abs() < 2e-3);
    }

    #[test]
    fn saturation_clamps_out_of_range() {
        let p = QuadParams::default();
        let limits = SaturationLimits::for_params(&p);
        let in_range = ActuatorCommand {
            thrust: 10.0,
            moment: Vector3::new(0.5, -0.5, 0.0),
            omega_cmd: Vector3::new(2.0, 0.0, -3.0),
        };
        assert_eq!(saturate(&in_range, &limits), in_range);

        let wild = ActuatorCommand {
            thrust: -1.0,
            moment: Vector3::new(5.0, -5.0, 0.2),
            omega_cmd: Vector3::new(20.0, 0.0, -20.0),
        };
        let sat = saturate(&wild, &limits);
        assert_eq!(sat.thrust, 0.0);
        assert_eq!(sat.omega_cmd, Vector3::new(8.0, 0.0, -8.0));
        assert_eq!(sat.moment, Vector3::new(1.0, -1.0, 0.2));
    }

    #[test]
    fn default_params_are_valid() {
        QuadParams::default().validate().unwrap();
        assert!(QuadParams {
            mass: -1.0,
            ..QuadParams::default()
        }
        .validate()
        .is_err());
    }
}
