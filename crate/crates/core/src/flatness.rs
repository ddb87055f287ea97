//! Differential-flatness reference generation.
//!
//! A quadrotor's states and inputs are recoverable from the flat outputs
//! (position and yaw) and their derivatives. Given a flat-output trajectory,
//! this module produces per-timestep reference attitude, velocity, angular
//! velocity, and feedforward thrust:
//!
//! 1. A reference control force is found by fixed-point iteration of
//!    f_r = m̂·v̇_r + m̂·g·1₃ + C̄·D̂·C̄ᵀ·v_r, with C̄ starting at zero so the
//!    first pass carries no drag term.
//! 2. The reference attitude triad is built from the force direction and the
//!    yaw heading, and the force is projected onto the body 3-axis to give
//!    the thrust.
//! 3. Angular velocity comes from the discrete-time Poisson equation on
//!    consecutive reference DCMs.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::controller::EstimatedParams;
use crate::lie::{so3_log, PoseSE23, Rotation};

/// Convergence tolerance on ‖Δf_r‖∞ for the force fixed point.
const FORCE_TOL: f64 = 1e-10;
/// Iteration cap for the force fixed point.
const MAX_ITERATIONS: usize = 50;
/// Below this force or triad-cross norm the construction is degenerate.
const DEGENERACY_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FlatnessError {
    /// Reference control force vanished (near free fall).
    #[error("reference control force norm {norm:.3e} below degeneracy floor")]
    DegenerateForce { norm: f64 },
    /// Thrust axis is parallel to the heading vector (near 90° pitch).
    #[error("triad cross product norm {norm:.3e} below degeneracy floor")]
    SingularTriad { norm: f64 },
    /// Force fixed point failed to converge.
    #[error("reference force iteration did not converge in {0} iterations")]
    NonConvergence(usize),
    /// Relative rotation between successive samples reached π.
    #[error("relative rotation angle is exactly pi; angular velocity is ambiguous")]
    AngleAtPi,
    /// Error while building a specific sample of a track.
    #[error("reference sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<FlatnessError>,
    },
}

/// Flat outputs and their first two time derivatives at one instant.
#[derive(Clone, Copy, Debug)]
pub struct FlatOutput {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub yaw: f64,
    pub yaw_rate: f64,
    pub yaw_accel: f64,
}

/// A twice-differentiable trajectory in the flat outputs with analytic
/// derivatives.
pub trait FlatTrajectory {
    fn sample(&self, t: f64) -> FlatOutput;
}

/// Helix r(t) = [R sin(at), R cos(at), c·t] with constant zero yaw.
#[derive(Clone, Copy, Debug)]
pub struct Helix {
    /// Radius R, m.
    pub radius: f64,
    /// Angular rate a, rad/s.
    pub angular_rate: f64,
    /// Climb rate c, m/s.
    pub climb_rate: f64,
}

impl Default for Helix {
    fn default() -> Self {
        Helix {
            radius: 3.0,
            angular_rate: 1.0,
            climb_rate: 0.5,
        }
    }
}

impl FlatTrajectory for Helix {
    fn sample(&self, t: f64) -> FlatOutput {
        let (r, a, c) = (self.radius, self.angular_rate, self.climb_rate);
        let (s, co) = (a * t).sin_cos();
        FlatOutput {
            position: Vector3::new(r * s, r * co, c * t),
            velocity: Vector3::new(r * a * co, -r * a * s, c),
            acceleration: Vector3::new(-r * a * a * s, -r * a * a * co, 0.0),
            yaw: 0.0,
            yaw_rate: 0.0,
            yaw_accel: 0.0,
        }
    }
}

/// Stationary flat output at a fixed position and yaw.
#[derive(Clone, Copy, Debug, Default)]
pub struct HoverPoint {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

impl FlatTrajectory for HoverPoint {
    fn sample(&self, _t: f64) -> FlatOutput {
        FlatOutput {
            position: self.position,
            velocity: Vector3::zeros(),
            acceleration: Vector3::zeros(),
            yaw: self.yaw,
            yaw_rate: 0.0,
            yaw_accel: 0.0,
        }
    }
}

/// One timestep of the reference trajectory.
#[derive(Clone, Copy, Debug)]
pub struct ReferenceSample {
    /// Reference attitude DCM.
    pub c_ar: Rotation,
    /// Reference inertial velocity, m/s.
    pub v_r: Vector3<f64>,
    /// Reference inertial position, m.
    pub r_r: Vector3<f64>,
    /// Reference angular velocity resolved in the reference frame, rad/s.
    pub omega_r: Vector3<f64>,
    /// Feedforward collective thrust, N.
    pub thrust_r: f64,
}

impl ReferenceSample {
    /// The reference state as a group element.
    pub fn pose(&self) -> PoseSE23 {
        PoseSE23::new(self.c_ar, self.v_r, self.r_r)
    }
}

/// Computes the reference attitude and feedforward thrust for one flat
/// sample by iterating the reference-force fixed point to convergence.
pub fn reference_attitude_thrust(
    flat: &FlatOutput,
    est: &EstimatedParams,
) -> Result<(Rotation, f64), FlatnessError> {
    let gravity_term = Vector3::new(0.0, 0.0, est.gravity) * est.m_hat;
    let heading = Vector3::new(flat.yaw.cos(), flat.yaw.sin(), 0.0);

    let mut c_bar = Matrix3::zeros();
    let mut prev_force: Option<Vector3<f64>> = None;
    for _ in 0..MAX_ITERATIONS {
        let force: Vector3<f64> = est.m_hat * flat.acceleration
            + gravity_term
            + c_bar * est.d_hat * c_bar.transpose() * flat.velocity;
        let norm = force.norm();
        if norm < DEGENERACY_FLOOR {
            return Err(FlatnessError::DegenerateForce { norm });
        }
        let r3 = force / norm;
        let cross = r3.cross(&heading);
        let cross_norm = cross.norm();
        if cross_norm < DEGENERACY_FLOOR {
            return Err(FlatnessError::SingularTriad { norm: cross_norm });
        }
        let r2 = cross / cross_norm;
        let r1 = r2.cross(&r3);
        let c_ar = Matrix3::from_columns(&[r1, r2, r3]);

        if let Some(prev) = prev_force {
            if (force - prev).abs().max() < FORCE_TOL {
                let body_force: Vector3<f64> = c_ar.transpose() * force;
                return Ok((Rotation::from_matrix_unchecked(c_ar), body_force.z));
            }
        }
        prev_force = Some(force);
        c_bar = c_ar;
    }
    Err(FlatnessError::NonConvergence(MAX_ITERATIONS))
}

/// Solves the discrete-time Poisson equation
/// C_k = C_{k−1}·exp(T·ω^×) for ω.
pub fn reference_angular_velocity(
    c_prev: &Rotation,
    c_curr: &Rotation,
    dt: f64,
) -> Result<Vector3<f64>, FlatnessError> {
    debug_assert!(dt > 0.0);
    let relative = c_prev.transpose() * *c_curr;
    let cos_t = ((relative.matrix().trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    if cos_t <= -1.0 {
        return Err(FlatnessError::AngleAtPi);
    }
    Ok(so3_log(&relative) / dt)
}

/// Samples the trajectory at t_k = k·dt for k = 0..=steps and assembles the
/// full reference track. The first sample's angular velocity duplicates the
/// second, since the Poisson equation needs a predecessor DCM.
pub fn build_reference_track(
    trajectory: &dyn FlatTrajectory,
    dt: f64,
    steps: usize,
    est: &EstimatedParams,
) -> Result<Vec<ReferenceSample>, FlatnessError> {
    assert!(steps >= 2, "reference track needs a horizon of at least 2 steps");
    let mut samples = Vec::with_capacity(steps + 1);
    for k in 0..=steps {
        let flat = trajectory.sample(k as f64 * dt);
        let (c_ar, thrust_r) =
            reference_attitude_thrust(&flat, est).map_err(|e| FlatnessError::AtSample {
                index: k,
                source: Box::new(e),
            })?;
        samples.push(ReferenceSample {
            c_ar,
            v_r: flat.velocity,
            r_r: flat.position,
            omega_r: Vector3::zeros(),
            thrust_r,
        });
    }
    for k in 1..=steps {
        let omega = reference_angular_velocity(&samples[k - 1].c_ar, &samples[k].c_ar, dt)
            .map_err(|e| FlatnessError::AtSample {
                index: k,
                source: Box::new(e),
            })?;
        samples[k].omega_r = omega;
    }
    samples[0].omega_r = samples[1].omega_r;
    Ok(samples)
}

/// Renders a reference track as CSV with columns
/// t, r_r, v_r, C_ar (row-major), ω_r, thrust_r.
pub fn reference_track_csv(track: &[ReferenceSample], dt: f64) -> String {
    let mut out = String::from(
        "t,r_r_x,r_r_y,r_r_z,v_r_x,v_r_y,v_r_z,\
         c_ar_00,c_ar_01,c_ar_02,c_ar_10,c_ar_11,c_ar_12,c_ar_20,c_ar_21,c_ar_22,\
         omega_r_x,omega_r_y,omega_r_z,thrust_r\n",
    );
    for (k, s) in track.iter().enumerate() {
        let c = s.c_ar.matrix();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            k as f64 * dt,
            s.r_r.x,
            s.r_r.y,
            s.r_r.z,
            s.v_r.x,
            s.v_r.y,
            s.v_r.z,
            c[(0, 0)],
            c[(0, 1)],
            c[(0, 2)],
            c[(1, 0)],
            c[(1, 1)],
            c[(1, 2)],
            c[(2, 0)],
            c[(2, 1)],
            c[(2, 2)],
            s.omega_r.x,
            s.omega_r.y,
            s.omega_r.z,
            s.thrust_r,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::QuadParams;
    use crate::lie::{orthonormality_defect, so3_exp};
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn est() -> EstimatedParams {
        EstimatedParams::exact(&QuadParams::default())
    }

    #[test]
    fn helix_samples_match_analytic_derivatives() {
        let h = Helix::default();
        let s0 = h.sample(0.0);
        assert_relative_eq!(s0.position, Vector3::new(0.0, 3.0, 0.0), epsilon = 1e-15);
        assert_relative_eq!(s0.velocity, Vector3::new(3.0, 0.0, 0.5), epsilon = 1e-15);
        assert_eq!(s0.yaw, 0.0);
        let s = h.sample(FRAC_PI_2);
        assert_relative_eq!(s.acceleration, Vector3::new(-3.0, 0.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn hover_reference_is_level_with_weight_thrust() {
        let flat = HoverPoint::default().sample(0.0);
        let (c_ar, thrust) = reference_attitude_thrust(&flat, &est()).unwrap();
        assert!((c_ar.matrix() - Matrix3::identity()).abs().max() < 1e-14);
        assert_relative_eq!(thrust, 1.1 * 9.81, epsilon = 1e-12);
        assert_relative_eq!(thrust, 10.791, epsilon = 1e-9);
    }

    #[test]
    fn hover_with_quarter_turn_yaw() {
        let flat = HoverPoint {
            position: Vector3::zeros(),
            yaw: FRAC_PI_2,
        }
        .sample(0.0);
        let (c_ar, _) = reference_attitude_thrust(&flat, &est()).unwrap();
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((c_ar.matrix() - expected).abs().max() < 1e-14);
    }

    #[test]
    fn force_iteration_matches_long_oracle() {
        // independent fixed-point loop run far past convergence
        let flat = Helix::default().sample(1.0);
        let e = est();
        let mut c_bar = Matrix3::zeros();
        let mut force: Vector3<f64> = Vector3::zeros();
        for _ in 0..100 {
            force = e.m_hat * flat.acceleration
                + Vector3::new(0.0, 0.0, e.m_hat * e.gravity)
                + c_bar * e.d_hat * c_bar.transpose() * flat.velocity;
            let r3: Vector3<f64> = force / force.norm();
            let c1 = Vector3::new(flat.yaw.cos(), flat.yaw.sin(), 0.0);
            let r2 = r3.cross(&c1) / r3.cross(&c1).norm();
            let r1 = r2.cross(&r3);
            c_bar = Matrix3::from_columns(&[r1, r2, r3]);
        }
        let oracle_thrust = (c_bar.transpose() * force).z;

        let (c_ar, thrust) = reference_attitude_thrust(&flat, &e).unwrap();
        assert!((c_ar.matrix() - c_bar).abs().max() < 1e-10);
        assert_relative_eq!(thrust, oracle_thrust, epsilon = 1e-10);
    }

    #[test]
    fn degenerate_force_is_reported() {
        // free fall: acceleration cancels gravity
        let flat = FlatOutput {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::new(0.0, 0.0, -9.81),
            yaw: 0.0,
            yaw_rate: 0.0,
            yaw_accel: 0.0,
        };
        assert!(matches!(
            reference_attitude_thrust(&flat, &est()),
            Err(FlatnessError::DegenerateForce { .. })
        ));
    }

    #[test]
    fn singular_triad_is_reported() {
        // force pointing along the heading (90 degree pitch)
        let flat = FlatOutput {
            position: Vector3::zeros(),
            velocity: Vector3::zeros(),
            acceleration: Vector3::new(50.0, 0.0, -9.81),
            yaw: 0.0,
            yaw_rate: 0.0,
            yaw_accel: 0.0,
        };
        assert!(matches!(
            reference_attitude_thrust(&flat, &est()),
            Err(FlatnessError::SingularTriad { .. })
        ));
    }

    #[test]
    fn poisson_equation_inverts_exactly() {
        let c = so3_exp(&Vector3::new(0.4, -0.1, 0.3));
        assert_eq!(
            reference_angular_velocity(&c, &c, 0.0025).unwrap(),
            Vector3::zeros()
        );

        let omega = reference_angular_velocity(
            &Rotation::identity(),
            &so3_exp(&Vector3::new(0.0, 0.0, 0.01)),
            0.0025,
        )
        .unwrap();
        assert_relative_eq!(omega, Vector3::new(0.0, 0.0, 4.0), epsilon = 1e-12);

        // round trip through the forward relation
        let omega0 = Vector3::new(0.7, -1.1, 0.4);
        let dt = 0.0025;
        let c_curr = c * so3_exp(&(omega0 * dt));
        let back = reference_angular_velocity(&c, &c_curr, dt).unwrap();
        assert_relative_eq!(back, omega0, epsilon = 1e-12);
    }

    #[test]
    fn poisson_reports_pi_ambiguity() {
        let c_curr = so3_exp(&Vector3::new(0.0, 0.0, PI));
        assert!(matches!(
            reference_angular_velocity(&Rotation::identity(), &c_curr, 1.0),
            Err(FlatnessError::AngleAtPi)
        ));
    }

    #[test]
    fn constant_position_track_is_hover() {
        let track = build_reference_track(&HoverPoint::default(), 0.0025, 10, &est()).unwrap();
        assert_eq!(track.len(), 11);
        for s in &track {
            assert!((s.c_ar.matrix() - Matrix3::identity()).abs().max() < 1e-14);
            assert_eq!(s.omega_r, Vector3::zeros());
            assert_relative_eq!(s.thrust_r, 1.1 * 9.81, epsilon = 1e-12);
        }
    }

    #[test]
    fn track_length_and_velocity_passthrough() {
        let h = Helix::default();
        let dt = 0.0025;
        let track = build_reference_track(&h, dt, 400, &est()).unwrap();
        assert_eq!(track.len(), 401);
        for (k, s) in track.iter().enumerate() {
            let flat = h.sample(k as f64 * dt);
            assert_eq!(s.v_r, flat.velocity);
            assert_eq!(s.r_r, flat.position);
        }
        let minimal = build_reference_track(&h, dt, 2, &est()).unwrap();
        assert_eq!(minimal.len(), 3);
    }

    #[test]
    fn triad_is_orthonormal_along_helix() {
        let track = build_reference_track(&Helix::default(), 0.0025, 200, &est()).unwrap();
        for s in &track {
            assert!(orthonormality_defect(s.c_ar.matrix()) < 1e-10);
            assert!(s.thrust_r > 0.0);
        }
    }

    #[test]
    fn drag_free_force_reconstruction() {
        let p = QuadParams::default().drag_free();
        let e = EstimatedParams::exact(&p);
        let h = Helix::default();
        for k in 0..10 {
            let flat = h.sample(k as f64 * 0.37);
            let (c_ar, thrust) = reference_attitude_thrust(&flat, &e).unwrap();
            let reconstructed = *c_ar.matrix() * Vector3::new(0.0, 0.0, thrust);
            let expected = e.m_hat * (flat.acceleration + Vector3::new(0.0, 0.0, e.gravity));
            assert_relative_eq!(reconstructed, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn poisson_reintegration_reproduces_track() {
        let dt = 0.0025;
        let track = build_reference_track(&Helix::default(), dt, 400, &est()).unwrap();
        for k in 1..track.len() {
            let rebuilt = track[k - 1].c_ar * so3_exp(&(track[k].omega_r * dt));
            assert!((rebuilt.matrix() - track[k].c_ar.matrix()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn track_csv_has_header_and_rows() {
        let track = build_reference_track(&HoverPoint::default(), 0.0025, 2, &est()).unwrap();
        let csv = reference_track_csv(&track, 0.0025);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("t,r_r_x"));
        assert_eq!(lines[0].split(',').count(), 20);
    }
}
