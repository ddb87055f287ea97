//! Closed-loop scenario execution.
//!
//! One run wires the whole pipeline together: reference track from the
//! flatness layer, offline gain schedule from the Riccati sweep over the
//! discretized Jacobians, then the 400 Hz control loop over the plant with
//! configurable estimation noise, actuator lag, and saturation.
//!
//! Noise only perturbs the copy of the state handed to the controller; the
//! plant truth is untouched. A run is a pure function of its config, so a
//! fixed seed reproduces results bit for bit.

use nalgebra::{SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use se23_control::controller::{
    control_step, integrator_update, torque_pi, tracking_error_conventional,
    tracking_error_conventional_principal, tracking_error_se23, tracking_error_se23_principal,
    ControllerState, EstimatedParams,
};
use se23_control::dynamics::{integrate_step, saturate, ActuatorCommand, ActuatorFilter, PlantState};
use se23_control::flatness::{build_reference_track, ReferenceSample};
use se23_control::lie::{so3_exp, so3_log, PoseSE23, Rotation};
use se23_control::linearize::{continuous_jacobians, discretize_zoh, Variant};
use se23_control::lqr::riccati_sweep;

use crate::config::{NoiseConfig, ScenarioConfig};
use crate::HarnessError;

/// True tracking error at one tick. The attitude component is the rotation
/// vector of δC; velocity and position are inertial differences, whose norms
/// coincide with the body-resolved invariant blocks.
#[derive(Clone, Copy, Debug)]
pub struct ErrorSample {
    pub phi: Vector3<f64>,
    pub vel: Vector3<f64>,
    pub pos: Vector3<f64>,
}

/// Per-tick log record of what the controller computed.
#[derive(Clone, Copy, Debug)]
pub struct TickLog {
    pub t: f64,
    pub xi_phi: Vector3<f64>,
    pub xi_v: Vector3<f64>,
    pub xi_r: Vector3<f64>,
    pub xi_i: Vector3<f64>,
    pub thrust: f64,
    pub omega_cmd: Vector3<f64>,
    pub moment: Vector3<f64>,
}

/// Outcome of one scenario run.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub rmse_phi: f64,
    pub rmse_v: f64,
    pub rmse_r: f64,
    /// Mean ‖r_r − r‖ over the final two seconds, m.
    pub final_window_pos_err: f64,
    /// ‖r_r − r‖ at the last tick, m.
    pub final_pos_err: f64,
    pub seed: u64,
    pub kappa: [f64; 4],
    pub ticks: Option<Vec<TickLog>>,
}

/// Componentwise root-mean-square of the per-tick error norms.
pub fn compute_rmse(samples: &[ErrorSample]) -> Result<(f64, f64, f64), HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptySeries);
    }
    let n = samples.len() as f64;
    let mut acc = [0.0f64; 3];
    for s in samples {
        acc[0] += s.phi.norm_squared();
        acc[1] += s.vel.norm_squared();
        acc[2] += s.pos.norm_squared();
    }
    Ok(((acc[0] / n).sqrt(), (acc[1] / n).sqrt(), (acc[2] / n).sqrt()))
}

/// The controller's view of the state: the true state perturbed by the
/// estimation-noise proxy. Attitude noise is a right-multiplied rotation
/// exp(η^×); the other channels are additive.
fn measure(state: &PlantState, rng: &mut ChaCha8Rng, noise: &NoiseConfig) -> PlantState {
    let mut draw = |std: f64| {
        let v: Vector3<f64> = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        v * std
    };
    let eta_att = draw(noise.attitude_std);
    let eta_vel = draw(noise.velocity_std);
    let eta_pos = draw(noise.position_std);
    let eta_omega = draw(noise.omega_std);
    PlantState {
        pose: PoseSE23::new(
            state.pose.rotation * so3_exp(&eta_att),
            state.pose.velocity + eta_vel,
            state.pose.position + eta_pos,
        ),
        omega_b: state.omega_b + eta_omega,
    }
}

/// Error extraction for the active convention, with the π-angle boundary
/// resolved by the deterministic principal branch (the strict extractors
/// refuse it; a 180° heading scenario hits it exactly once, at t = 0).
///
/// Returns the 9-dimensional feedback error, δC, and the (δv, δr) blocks
/// that feed the integrator.
fn extract_error(
    variant: Variant,
    pose: &PoseSE23,
    ref_pose: &PoseSE23,
) -> (SVector<f64, 9>, Rotation, Vector3<f64>, Vector3<f64>) {
    if variant.is_se23() {
        let (xi, delta) = match tracking_error_se23(pose, ref_pose) {
            Ok(pair) => pair,
            Err(_) => tracking_error_se23_principal(pose, ref_pose),
        };
        (xi.as_vector(), delta.rotation, delta.velocity, delta.position)
    } else {
        let (e, delta_c) = match tracking_error_conventional(pose, ref_pose) {
            Ok(pair) => pair,
            Err(_) => tracking_error_conventional_principal(pose, ref_pose),
        };
        (e, delta_c, e.fixed_rows::<3>(3).into(), e.fixed_rows::<3>(6).into())
    }
}

/// Initial plant state per the configured mode; see
/// [`crate::config::InitialCondition`]. The body rate starts at δC·ω_r, the
/// exact tracking value for the initial attitude error.
fn initial_state(cfg: &ScenarioConfig, first: &ReferenceSample) -> PlantState {
    let heading = cfg.initial.heading;
    let (rotation, position) = if cfg.initial.absolute {
        (
            so3_exp(&Vector3::new(0.0, 0.0, heading)),
            Vector3::from(cfg.initial.position),
        )
    } else {
        (
            first.c_ar * so3_exp(&Vector3::new(0.0, 0.0, -heading)),
            first.r_r + Vector3::from(cfg.initial.position),
        )
    };
    let delta_c = rotation.transpose() * first.c_ar;
    PlantState {
        pose: PoseSE23::new(rotation, first.v_r, position),
        omega_b: delta_c * first.omega_r,
    }
}

/// Runs one closed-loop scenario and reports RMSE metrics plus optional
/// per-tick logs.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrialResult, HarnessError> {
    cfg.validate()?;
    let params = cfg.params.to_quad_params();
    params.validate()?;
    let est = EstimatedParams::scaled(&params, cfg.kappa);
    let variant: Variant = cfg.variant.into();
    let n = cfg.ticks();
    let horizon = cfg.schedule_ticks();
    let dt = cfg.dt();
    let c1_eff = if cfg.integrator_enabled { cfg.c1 } else { 0.0 };

    let trajectory = cfg.trajectory.build();
    let track = build_reference_track(trajectory.as_ref(), dt, horizon, &est)?;

    // Gains are designed from the controller's parameter estimates, over the
    // padded horizon; the run consumes the first `n` of them.
    let design_params = est.to_quad_params(&params);
    let weights = cfg.weights.to_weights(cfg.integrator_enabled)?;
    let jacobians: Vec<_> = track[..horizon]
        .iter()
        .map(|sample| discretize_zoh(&continuous_jacobians(sample, &design_params, c1_eff, variant), dt))
        .collect();
    let schedule = riccati_sweep(&jacobians, &weights)?;

    let limits = cfg.saturation.to_limits(&params);
    let pi_gains = cfg.torque_gains.to_gains();
    let mut filter = ActuatorFilter::new(cfg.actuator_tau);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = initial_state(cfg, &track[0]);
    let mut ctrl = ControllerState::default();

    let substeps = cfg.plant_substeps;
    let sub_dt = dt / substeps as f64;
    let window_start = cfg.duration - 2.0;

    let mut errors = Vec::with_capacity(n);
    let mut window = Vec::new();
    let mut logs = cfg.record_ticks.then(|| Vec::with_capacity(n));
    let mut final_pos_err = 0.0;

    for k in 0..n {
        let t = k as f64 * dt;
        let reference = &track[k];
        let ref_pose = reference.pose();

        let meas = measure(&state, &mut rng, &cfg.noise);
        let (e9, delta_c, block_v, block_r) = extract_error(variant, &meas.pose, &ref_pose);
        let mut e12 = SVector::<f64, 12>::zeros();
        e12.fixed_rows_mut::<9>(0).copy_from(&e9);
        e12.fixed_rows_mut::<3>(9).copy_from(&ctrl.xi_i);
        let xi_i_used = ctrl.xi_i;

        let cmd = control_step(&e12, schedule.gain(k), reference, &delta_c);
        let moment = torque_pi(
            &meas.omega_b,
            &cmd.omega_cmd,
            &mut ctrl,
            &est,
            &meas.pose.rotation,
            &meas.pose.velocity,
            &pi_gains,
            dt,
            cfg.windup.omega_limit,
        );
        if cfg.integrator_enabled {
            integrator_update(&mut ctrl, &block_v, &block_r, cfg.c1, dt, cfg.windup.xi_limit);
        } else {
            ctrl.step += 1;
        }

        let commanded = ActuatorCommand {
            thrust: cmd.thrust,
            moment,
            omega_cmd: cmd.omega_cmd,
        };
        let applied = filter.filter(&saturate(&commanded, &limits), dt);

        // metrics use the true state, not the controller's noisy view
        let delta_c_true = state.pose.rotation.transpose() * reference.c_ar;
        let true_err = ErrorSample {
            phi: so3_log(&delta_c_true),
            vel: reference.v_r - state.pose.velocity,
            pos: reference.r_r - state.pose.position,
        };
        errors.push(true_err);
        if t >= window_start {
            window.push(true_err.pos.norm());
        }
        final_pos_err = true_err.pos.norm();
        if let Some(logs) = logs.as_mut() {
            logs.push(TickLog {
                t,
                xi_phi: e9.fixed_rows::<3>(0).into(),
                xi_v: e9.fixed_rows::<3>(3).into(),
                xi_r: e9.fixed_rows::<3>(6).into(),
                xi_i: xi_i_used,
                thrust: cmd.thrust,
                omega_cmd: cmd.omega_cmd,
                moment,
            });
        }

        let wrench = applied.wrench();
        for _ in 0..substeps {
            state = integrate_step(&state, &wrench, &params, sub_dt);
        }
    }

    let (rmse_phi, rmse_v, rmse_r) = compute_rmse(&errors)?;
    let final_window_pos_err = window.iter().sum::<f64>() / window.len().max(1) as f64;
    Ok(TrialResult {
        rmse_phi,
        rmse_v,
        rmse_r,
        final_window_pos_err,
        final_pos_err,
        seed: cfg.seed,
        kappa: cfg.kappa,
        ticks: logs,
    })
}
