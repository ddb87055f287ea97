//! Closed-loop control law.
//!
//! Errors between the state and the reference are extracted either as a
//! left-invariant SE₂(3) error δX = X⁻¹·X^r or with the conventional
//! definitions (multiplicative attitude error, inertial-frame velocity and
//! position differences). The gain-scheduled feedback δu = −K_k·δξ is
//! combined with feedforward:
//!
//! ```text
//!   f^T = f^{T_r} − δf^T,    ω_cmd = δC·ω_r − δω
//! ```
//!
//! and the inner PI loop turns the angular-velocity command into a moment
//! with drag feedforward:
//!
//! ```text
//!   m = Ê·Cᵀv + F̂·ω − K^ω·e − K^i·∫e,    e = ω − ω_cmd
//! ```

use nalgebra::{Matrix3, SVector, Vector3};
use thiserror::Error;

use crate::dynamics::QuadParams;
use crate::flatness::ReferenceSample;
use crate::lie::{se23_log, se23_log_principal, so3_log, LieError, PoseSE23, Rotation, TangentSE23};
use crate::lqr::GainMat;

#[derive(Debug, Error)]
pub enum ControlError {
    #[error(transparent)]
    Lie(#[from] LieError),
}

/// The controller's best estimates of the plant parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatedParams {
    /// Estimated mass m̂, kg.
    pub m_hat: f64,
    /// Estimated rotor-drag matrix D̂, 1/s.
    pub d_hat: Matrix3<f64>,
    /// Estimated rotational drag Ê, N/s.
    pub e_hat: Matrix3<f64>,
    /// Estimated rotational drag F̂, N·m·s/rad.
    pub f_hat: Matrix3<f64>,
    /// Gravitational acceleration, m/s² (known, not estimated).
    pub gravity: f64,
}

impl EstimatedParams {
    /// Estimates equal to the true parameters.
    pub fn exact(params: &QuadParams) -> Self {
        Self::scaled(params, [1.0; 4])
    }

    /// Estimates scaled from the true parameters as
    /// m̂ = κ₁·m, Ê = κ₂·E, F̂ = κ₃·F, D̂ = κ₄·D.
    pub fn scaled(params: &QuadParams, kappa: [f64; 4]) -> Self {
        EstimatedParams {
            m_hat: kappa[0] * params.mass,
            e_hat: kappa[1] * params.drag_e,
            f_hat: kappa[2] * params.drag_f,
            d_hat: kappa[3] * params.drag_d,
            gravity: params.gravity,
        }
    }

    /// The estimates recast as plant parameters for gain design; inertia is
    /// taken from the template (it does not enter the linearization).
    pub fn to_quad_params(&self, template: &QuadParams) -> QuadParams {
        QuadParams {
            mass: self.m_hat,
            inertia: template.inertia,
            drag_d: self.d_hat,
            drag_e: self.e_hat,
            drag_f: self.f_hat,
            gravity: self.gravity,
        }
    }
}

/// Mutable controller memory: the outer-loop integral state, the inner-loop
/// angular-velocity error integral, and the tick index.
#[derive(Clone, Copy, Debug, Default)]
pub struct ControllerState {
    /// ∫(c₁δr + δv) dτ, m.
    pub xi_i: Vector3<f64>,
    /// ∫e^ω dτ, rad.
    pub omega_err_integral: Vector3<f64>,
    /// Tick index k.
    pub step: usize,
}

/// Output of one outer-loop control step, before saturation.
#[derive(Clone, Copy, Debug)]
pub struct ControlCommand {
    /// Collective thrust command, N.
    pub thrust: f64,
    /// Body angular-velocity command, rad/s.
    pub omega_cmd: Vector3<f64>,
    /// Feedback portion δu = (δf^T, δω), retained for logging.
    pub delta_u: SVector<f64, 4>,
}

/// PI gains of the inner torque loop.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorquePiGains {
    pub k_omega: Matrix3<f64>,
    pub k_integral: Matrix3<f64>,
}

impl Default for TorquePiGains {
    fn default() -> Self {
        TorquePiGains {
            k_omega: Matrix3::from_diagonal_element(5.0),
            k_integral: Matrix3::from_diagonal_element(3.0),
        }
    }
}

fn rotation_angle_at_pi(c: &Rotation) -> bool {
    ((c.matrix().trace() - 1.0) * 0.5).clamp(-1.0, 1.0) <= -1.0
}

/// Left-invariant tracking error δX = X⁻¹·X^r.
///
/// Returns the log coordinates δξ together with the group error δX itself
/// (whose rotation block δC rotates the feedforward angular velocity and
/// whose velocity/position blocks feed the integrator).
pub fn tracking_error_se23(
    x: &PoseSE23,
    x_ref: &PoseSE23,
) -> Result<(TangentSE23, PoseSE23), ControlError> {
    let delta = x.inverse().compose(x_ref);
    let xi = se23_log(&delta)?;
    Ok((xi, delta))
}

/// As [`tracking_error_se23`], but resolves the π-angle boundary with the
/// deterministic principal-branch convention instead of failing.
pub fn tracking_error_se23_principal(x: &PoseSE23, x_ref: &PoseSE23) -> (TangentSE23, PoseSE23) {
    let delta = x.inverse().compose(x_ref);
    (se23_log_principal(&delta), delta)
}

/// Conventional tracking error: multiplicative attitude error and
/// inertial-frame velocity/position differences, stacked as
/// (δφ, δv, δr). Also returns δC.
pub fn tracking_error_conventional(
    x: &PoseSE23,
    x_ref: &PoseSE23,
) -> Result<(SVector<f64, 9>, Rotation), ControlError> {
    let delta_c = x.rotation.transpose() * x_ref.rotation;
    if rotation_angle_at_pi(&delta_c) {
        return Err(ControlError::Lie(LieError::AngleAtPi));
    }
    Ok(conventional_parts(x, x_ref, delta_c))
}

/// As [`tracking_error_conventional`], without the π-boundary check.
pub fn tracking_error_conventional_principal(
    x: &PoseSE23,
    x_ref: &PoseSE23,
) -> (SVector<f64, 9>, Rotation) {
    let delta_c = x.rotation.transpose() * x_ref.rotation;
    conventional_parts(x, x_ref, delta_c)
}

fn conventional_parts(
    x: &PoseSE23,
    x_ref: &PoseSE23,
    delta_c: Rotation,
) -> (SVector<f64, 9>, Rotation) {
    let mut e = SVector::<f64, 9>::zeros();
    e.fixed_rows_mut::<3>(0).copy_from(&so3_log(&delta_c));
    e.fixed_rows_mut::<3>(3).copy_from(&(x_ref.velocity - x.velocity));
    e.fixed_rows_mut::<3>(6).copy_from(&(x_ref.position - x.position));
    (e, delta_c)
}

/// Applies the feedback law δu = −K_k·[δξ; ξ^i] and combines it with the
/// feedforward reference inputs.
pub fn control_step(
    error: &SVector<f64, 12>,
    gain: &GainMat,
    reference: &ReferenceSample,
    delta_c: &Rotation,
) -> ControlCommand {
    let delta_u: SVector<f64, 4> = -(gain * error);
    let delta_omega: Vector3<f64> = delta_u.fixed_rows::<3>(1).into();
    ControlCommand {
        thrust: reference.thrust_r - delta_u[0],
        omega_cmd: *delta_c * reference.omega_r - delta_omega,
        delta_u,
    }
}

/// Forward-Euler update of the outer-loop integral state,
/// ξ^i ← clamp(ξ^i + T·(c₁·δr + δv)), and tick advance.
///
/// `delta_v`/`delta_r` are the error blocks of the active convention: the
/// δX blocks for the invariant controller, the inertial differences for the
/// conventional one.
pub fn integrator_update(
    state: &mut ControllerState,
    delta_v: &Vector3<f64>,
    delta_r: &Vector3<f64>,
    c1: f64,
    dt: f64,
    clamp: f64,
) {
    debug_assert!(dt > 0.0);
    let next = state.xi_i + (delta_r * c1 + delta_v) * dt;
    state.xi_i = next.map(|x| x.clamp(-clamp, clamp));
    state.step += 1;
}

/// Inner PI torque law with drag feedforward. Uses the current integral,
/// then accumulates the angular-velocity error (forward Euler, clamped).
#[allow(clippy::too_many_arguments)]
pub fn torque_pi(
    omega_meas: &Vector3<f64>,
    omega_cmd: &Vector3<f64>,
    state: &mut ControllerState,
    est: &EstimatedParams,
    c_ab: &Rotation,
    v_a: &Vector3<f64>,
    gains: &TorquePiGains,
    dt: f64,
    integral_clamp: f64,
) -> Vector3<f64> {
    let err = omega_meas - omega_cmd;
    let moment = est.e_hat * (c_ab.transpose() * *v_a) + est.f_hat * omega_meas
        - gains.k_omega * err
        - gains.k_integral * state.omega_err_integral;
    let next = state.omega_err_integral + err * dt;
    state.omega_err_integral = next.map(|x| x.clamp(-integral_clamp, integral_clamp));
    moment
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::{se23_exp, so3_exp};
    use approx::assert_relative_eq;

    fn pose_from_xi(phi: [f64; 3], v: [f64; 3], r: [f64; 3]) -> PoseSE23 {
        se23_exp(&TangentSE23::new(
            Vector3::from(phi),
            Vector3::from(v),
            Vector3::from(r),
        ))
    }

    fn reference() -> ReferenceSample {
        ReferenceSample {
            c_ar: Rotation::identity(),
            v_r: Vector3::new(3.0, 0.0, 0.5),
            r_r: Vector3::new(0.0, 3.0, 0.0),
            omega_r: Vector3::new(0.1, -0.2, 0.9),
            thrust_r: 11.0,
        }
    }

    #[test]
    fn zero_error_at_reference() {
        let x = pose_from_xi([0.2, -0.1, 0.4], [1.0, 0.0, -0.5], [2.0, 3.0, -1.0]);
        let (xi, delta) = tracking_error_se23(&x, &x).unwrap();
        assert_eq!(xi.as_vector(), SVector::<f64, 9>::zeros());
        assert!((delta.matrix() - PoseSE23::identity().matrix()).abs().max() < 1e-15);

        let (e, dc) = tracking_error_conventional(&x, &x).unwrap();
        assert!(e.abs().max() < 1e-15);
        assert!((dc.matrix() - Rotation::identity().matrix()).abs().max() < 1e-15);
    }

    #[test]
    fn se23_error_recovers_injected_offset() {
        let xi0 = TangentSE23::new(
            Vector3::new(0.3, -0.2, 0.5),
            Vector3::new(0.4, 0.1, -0.3),
            Vector3::new(1.0, -2.0, 0.7),
        );
        let x_ref = pose_from_xi([0.1, 0.6, -0.3], [2.0, 1.0, 0.0], [5.0, 0.0, 1.0]);
        let x = x_ref.compose(&se23_exp(&xi0.scale(-1.0)));
        let (xi, _) = tracking_error_se23(&x, &x_ref).unwrap();
        assert_relative_eq!(xi.as_vector(), xi0.as_vector(), epsilon = 1e-10);
    }

    #[test]
    fn pure_position_offset_maps_to_position_error() {
        let x_ref = PoseSE23::new(
            Rotation::identity(),
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(4.0, 5.0, 6.0),
        );
        let x = PoseSE23::new(
            Rotation::identity(),
            x_ref.velocity,
            x_ref.position - Vector3::new(0.5, -0.25, 1.0),
        );
        let (xi, _) = tracking_error_se23(&x, &x_ref).unwrap();
        assert_relative_eq!(xi.xi_r, Vector3::new(0.5, -0.25, 1.0), epsilon = 1e-14);
        assert!(xi.xi_phi.norm() < 1e-15 && xi.xi_v.norm() < 1e-15);
    }

    #[test]
    fn conventional_error_components() {
        let phi0 = Vector3::new(0.2, 0.1, -0.3);
        let x_ref = PoseSE23::new(
            so3_exp(&Vector3::new(0.5, 0.0, 0.2)),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
        );
        // attitude offset only: C_ab = C_ar·exp(−φ₀) so that δC = exp(φ₀)
        let x = PoseSE23::new(
            x_ref.rotation * so3_exp(&-phi0),
            x_ref.velocity,
            x_ref.position,
        );
        let (e, _) = tracking_error_conventional(&x, &x_ref).unwrap();
        let phi: Vector3<f64> = e.fixed_rows::<3>(0).into();
        assert_relative_eq!(phi, phi0, epsilon = 1e-12);
        assert!(e.fixed_rows::<6>(3).abs().max() < 1e-15);

        // position offset only: the raw inertial difference comes back
        let x = PoseSE23::new(
            x_ref.rotation,
            x_ref.velocity,
            x_ref.position - Vector3::new(1.0, 2.0, 3.0),
        );
        let (e, _) = tracking_error_conventional(&x, &x_ref).unwrap();
        let dr: Vector3<f64> = e.fixed_rows::<3>(6).into();
        assert_eq!(dr, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn left_invariance_of_se23_error() {
        let x = pose_from_xi([0.4, -0.3, 0.2], [1.0, 2.0, -1.0], [3.0, 0.5, -2.0]);
        let x_ref = pose_from_xi([-0.1, 0.2, 0.7], [0.0, 1.5, 0.5], [1.0, 1.0, 4.0]);
        let (xi, _) = tracking_error_se23(&x, &x_ref).unwrap();

        let g = PoseSE23::new(
            so3_exp(&Vector3::new(1.2, -0.4, 0.8)),
            Vector3::zeros(),
            Vector3::zeros(),
        );
        let (xi_shifted, _) =
            tracking_error_se23(&g.compose(&x), &g.compose(&x_ref)).unwrap();
        assert_relative_eq!(
            xi_shifted.as_vector(),
            xi.as_vector(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn error_conventions_agree_to_first_order() {
        // with C_ab = I both conventions reduce to the inertial differences,
        // so their gap shrinks quadratically with the error scale
        let x = PoseSE23::new(
            Rotation::identity(),
            Vector3::new(2.0, -1.0, 0.5),
            Vector3::new(1.0, 4.0, -0.5),
        );
        let direction = TangentSE23::new(
            Vector3::new(0.5, -0.3, 0.8),
            Vector3::new(0.2, 0.9, -0.4),
            Vector3::new(-0.6, 0.1, 0.7),
        );
        let gap = |scale: f64| {
            let x_ref = x.compose(&se23_exp(&direction.scale(scale)));
            let (xi, _) = tracking_error_se23(&x, &x_ref).unwrap();
            let (e, _) = tracking_error_conventional(&x, &x_ref).unwrap();
            (xi.as_vector() - e).abs().max()
        };
        let ratio = gap(1e-2) / gap(1e-3);
        assert!(
            (50.0..200.0).contains(&ratio),
            "expected quadratic gap, ratio {ratio}"
        );
    }

    #[test]
    fn feedforward_passes_through_zero_error() {
        let r = reference();
        let zero = SVector::<f64, 12>::zeros();
        let gain = GainMat::from_element(0.7);
        let cmd = control_step(&zero, &gain, &r, &Rotation::identity());
        assert_eq!(cmd.thrust, r.thrust_r);
        assert_eq!(cmd.omega_cmd, r.omega_r);
        assert_eq!(cmd.delta_u, SVector::<f64, 4>::zeros());

        // zero gain: feedforward regardless of error
        let mut e = SVector::<f64, 12>::zeros();
        e[6] = 5.0;
        let cmd = control_step(&e, &GainMat::zeros(), &r, &Rotation::identity());
        assert_eq!(cmd.thrust, r.thrust_r);
        assert_eq!(cmd.omega_cmd, r.omega_r);
    }

    #[test]
    fn thrust_feedback_sign_bookkeeping() {
        // single gain entry k on the z-position error
        let r = reference();
        let mut gain = GainMat::zeros();
        let k = 2.5;
        gain[(0, 8)] = k;
        let mut e = SVector::<f64, 12>::zeros();
        e[8] = 1.0;
        let cmd = control_step(&e, &gain, &r, &Rotation::identity());
        assert_relative_eq!(cmd.delta_u[0], -k, epsilon = 1e-15);
        assert_relative_eq!(cmd.thrust, r.thrust_r + k, epsilon = 1e-15);
    }

    #[test]
    fn feedforward_omega_is_rotated_by_delta_c() {
        let r = reference();
        let dc = so3_exp(&Vector3::new(0.0, 0.0, 1.0));
        let cmd = control_step(&SVector::zeros(), &GainMat::zeros(), &r, &dc);
        assert_relative_eq!(cmd.omega_cmd, dc * r.omega_r, epsilon = 1e-15);
    }

    #[test]
    fn integrator_accumulates_and_clamps() {
        let mut state = ControllerState::default();
        let dv = Vector3::zeros();
        let dr = Vector3::new(1.0, 0.0, 0.0);
        let dt = 0.0025;
        for _ in 0..400 {
            integrator_update(&mut state, &dv, &dr, 1.0, dt, 5.0);
        }
        assert_relative_eq!(state.xi_i, Vector3::new(1.0, 0.0, 0.0), epsilon = 1e-12);
        assert_eq!(state.step, 400);

        // zero errors leave the state alone
        let before = state.xi_i;
        integrator_update(&mut state, &Vector3::zeros(), &Vector3::zeros(), 1.0, dt, 5.0);
        assert_eq!(state.xi_i, before);

        // clamp
        let mut state = ControllerState::default();
        for _ in 0..100 {
            integrator_update(&mut state, &dv, &(dr * 100.0), 1.0, 1.0, 5.0);
        }
        assert_eq!(state.xi_i.x, 5.0);
    }

    #[test]
    fn torque_pi_term_by_term() {
        let p = QuadParams::default();
        let est = EstimatedParams::exact(&p);
        let gains = TorquePiGains::default();
        let identity = Rotation::identity();
        let dt = 0.0025;

        // zero error, zero drag estimates, zero integral
        let mut state = ControllerState::default();
        let no_drag = EstimatedParams {
            e_hat: Matrix3::zeros(),
            f_hat: Matrix3::zeros(),
            ..est
        };
        let m = torque_pi(
            &Vector3::zeros(),
            &Vector3::zeros(),
            &mut state,
            &no_drag,
            &identity,
            &Vector3::zeros(),
            &gains,
            dt,
            2.0,
        );
        assert_eq!(m, Vector3::zeros());

        // pure proportional response: e = [1, 0, 0]
        let mut state = ControllerState::default();
        let m = torque_pi(
            &Vector3::new(1.0, 0.0, 0.0),
            &Vector3::zeros(),
            &mut state,
            &no_drag,
            &identity,
            &Vector3::zeros(),
            &gains,
            dt,
            2.0,
        );
        assert_relative_eq!(m, Vector3::new(-5.0, 0.0, 0.0), epsilon = 1e-15);

        // pure feedforward: e = 0, v = x̂ → Ê·Cᵀv + F̂·ω
        let mut state = ControllerState::default();
        let omega = Vector3::new(0.2, -0.1, 0.3);
        let m = torque_pi(
            &omega,
            &omega,
            &mut state,
            &est,
            &identity,
            &Vector3::new(1.0, 0.0, 0.0),
            &gains,
            dt,
            2.0,
        );
        let expected = Vector3::new(0.05, 0.0, 0.0) + est.f_hat * omega;
        assert_relative_eq!(m, expected, epsilon = 1e-15);
    }

    #[test]
    fn torque_pi_is_linear_in_error_and_integral() {
        let p = QuadParams::default();
        let est = EstimatedParams::exact(&p);
        let gains = TorquePiGains::default();
        let identity = Rotation::identity();
        let v = Vector3::new(0.5, -0.2, 0.1);
        let omega = Vector3::new(0.1, 0.2, -0.3);

        let eval = |err_scale: f64, int: Vector3<f64>| {
            let mut state = ControllerState {
                omega_err_integral: int,
                ..Default::default()
            };
            torque_pi(
                &(omega + Vector3::new(1.0, -2.0, 0.5) * err_scale),
                &omega,
                &mut state,
                &est,
                &identity,
                &v,
                &gains,
                0.0025,
                2.0,
            )
        };
        let base = eval(0.0, Vector3::zeros());
        let unit = eval(1.0, Vector3::zeros()) - base;
        let two = eval(2.0, Vector3::zeros()) - base;
        assert_relative_eq!(two, unit * 2.0, epsilon = 1e-12);

        let int_unit = eval(0.0, Vector3::new(0.0, 1.0, 0.0)) - base;
        let int_three = eval(0.0, Vector3::new(0.0, 3.0, 0.0)) - base;
        assert_relative_eq!(int_three, int_unit * 3.0, epsilon = 1e-12);
    }

    #[test]
    fn omega_integral_clamps() {
        let p = QuadParams::default();
        let est = EstimatedParams::exact(&p);
        let gains = TorquePiGains::default();
        let mut state = ControllerState::default();
        for _ in 0..100 {
            torque_pi(
                &Vector3::new(100.0, 0.0, 0.0),
                &Vector3::zeros(),
                &mut state,
                &est,
                &Rotation::identity(),
                &Vector3::zeros(),
                &gains,
                1.0,
                2.0,
            );
        }
        assert_eq!(state.omega_err_integral.x, 2.0);
    }

    #[test]
    fn scaled_estimates() {
        let p = QuadParams::default();
        let est = EstimatedParams::scaled(&p, [0.8, 0.8, 0.8, 0.8]);
        assert_relative_eq!(est.m_hat, 0.88, epsilon = 1e-15);
        assert_relative_eq!(est.d_hat[(0, 0)], 0.484, epsilon = 1e-12);
        assert_relative_eq!(est.e_hat[(1, 1)], 0.04, epsilon = 1e-15);
        assert_relative_eq!(est.f_hat[(2, 2)], 0.08, epsilon = 1e-15);
        let q = est.to_quad_params(&p);
        assert_eq!(q.inertia, p.inertia);
        assert_eq!(q.mass, est.m_hat);
    }
}
