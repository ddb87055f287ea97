//! Run configuration: TOML schema, defaults, and validation.
//!
//! A single config file drives every subcommand. Scenario settings live at
//! the top level; the optional `[montecarlo]` table configures batch runs.
//! Every field has a default, so an empty file is a valid config.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use se23_control::controller::TorquePiGains;
use se23_control::dynamics::{QuadParams, SaturationLimits};
use se23_control::flatness::{FlatTrajectory, Helix, HoverPoint};
use se23_control::linearize::Variant;
use se23_control::lqr::LqrWeights;

use crate::HarnessError;

/// Controller variant as it appears in config files and on the CLI.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Se23Drag,
    Se23DragFree,
    ConventionalDrag,
    ConventionalDragFree,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Se23Drag => Variant::Se23WithDrag,
            VariantArg::Se23DragFree => Variant::Se23DragFree,
            VariantArg::ConventionalDrag => Variant::ConventionalWithDrag,
            VariantArg::ConventionalDragFree => Variant::ConventionalDragFree,
        }
    }
}

impl From<Variant> for VariantArg {
    fn from(v: Variant) -> VariantArg {
        match v {
            Variant::Se23WithDrag => VariantArg::Se23Drag,
            Variant::Se23DragFree => VariantArg::Se23DragFree,
            Variant::ConventionalWithDrag => VariantArg::ConventionalDrag,
            Variant::ConventionalDragFree => VariantArg::ConventionalDragFree,
        }
    }
}

impl std::fmt::Display for VariantArg {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(Variant::from(*self).label())
    }
}

/// Flat-output trajectory selection.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrajectoryConfig {
    Helix {
        radius: f64,
        angular_rate: f64,
        climb_rate: f64,
    },
    Hover {
        position: [f64; 3],
        yaw: f64,
    },
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        let h = Helix::default();
        TrajectoryConfig::Helix {
            radius: h.radius,
            angular_rate: h.angular_rate,
            climb_rate: h.climb_rate,
        }
    }
}

impl TrajectoryConfig {
    pub fn build(&self) -> Box<dyn FlatTrajectory> {
        match *self {
            TrajectoryConfig::Helix {
                radius,
                angular_rate,
                climb_rate,
            } => Box::new(Helix {
                radius,
                angular_rate,
                climb_rate,
            }),
            TrajectoryConfig::Hover { position, yaw } => Box::new(HoverPoint {
                position: Vector3::from(position),
                yaw,
            }),
        }
    }
}

/// Initial pose of the plant.
///
/// In the default relative mode the offsets apply on top of the reference:
/// position = r_r(0) + offset and attitude = C_ar(0)·exp(−ψ·e₃), which makes
/// the initial invariant error exactly (0, 0, ψ) in its attitude block. In
/// absolute mode the fields are taken verbatim: position as given, attitude
/// a pure yaw rotation by ψ (the convention of the Monte-Carlo draws).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InitialCondition {
    pub position: [f64; 3],
    pub heading: f64,
    pub absolute: bool,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition {
            position: [0.0; 3],
            heading: 0.0,
            absolute: false,
        }
    }
}

/// True plant parameters (diagonals of the drag matrices).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamsConfig {
    pub mass: f64,
    pub inertia_diag: [f64; 3],
    pub drag_d_diag: [f64; 3],
    pub drag_e_diag: [f64; 3],
    pub drag_f_diag: [f64; 3],
    pub gravity: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        let p = QuadParams::default();
        ParamsConfig {
            mass: p.mass,
            inertia_diag: [p.inertia[(0, 0)], p.inertia[(1, 1)], p.inertia[(2, 2)]],
            drag_d_diag: [p.drag_d[(0, 0)], p.drag_d[(1, 1)], p.drag_d[(2, 2)]],
            drag_e_diag: [p.drag_e[(0, 0)], p.drag_e[(1, 1)], p.drag_e[(2, 2)]],
            drag_f_diag: [p.drag_f[(0, 0)], p.drag_f[(1, 1)], p.drag_f[(2, 2)]],
            gravity: p.gravity,
        }
    }
}

impl ParamsConfig {
    pub fn to_quad_params(&self) -> QuadParams {
        let diag = |d: [f64; 3]| Matrix3::from_diagonal(&Vector3::from(d));
        QuadParams {
            mass: self.mass,
            inertia: diag(self.inertia_diag),
            drag_d: diag(self.drag_d_diag),
            drag_e: diag(self.drag_e_diag),
            drag_f: diag(self.drag_f_diag),
            gravity: self.gravity,
        }
    }
}

/// LQR weight diagonals, ordered (ξ^φ, ξ^v, ξ^r, ξ^i) and (δf, δω).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightsConfig {
    pub q_diag: [f64; 12],
    pub r_diag: [f64; 4],
    pub s_diag: [f64; 12],
}

impl Default for WeightsConfig {
    fn default() -> Self {
        // position-dominant tracking weight; the integrator entries are
        // large enough that a 20% mass error is integrated out within a few
        // seconds of the transient settling
        let q = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 10.0, 10.0, 10.0, 5.0, 5.0, 5.0];
        WeightsConfig {
            q_diag: q,
            r_diag: [1.0; 4],
            s_diag: q,
        }
    }
}

impl WeightsConfig {
    /// Builds validated weights; with the integrator disabled its rows are
    /// dropped from Q and S so the gains carry no integral action.
    pub fn to_weights(&self, integrator_enabled: bool) -> Result<LqrWeights, HarnessError> {
        let zero_tail = |mut d: [f64; 12]| {
            if !integrator_enabled {
                d[9] = 0.0;
                d[10] = 0.0;
                d[11] = 0.0;
            }
            d
        };
        LqrWeights::from_diagonals(
            &zero_tail(self.q_diag),
            &self.r_diag,
            &zero_tail(self.s_diag),
        )
        .map_err(HarnessError::from)
    }
}

/// Inner-loop PI gain diagonals.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TorqueGainsConfig {
    pub k_omega_diag: [f64; 3],
    pub k_integral_diag: [f64; 3],
}

impl Default for TorqueGainsConfig {
    fn default() -> Self {
        TorqueGainsConfig {
            k_omega_diag: [5.0; 3],
            k_integral_diag: [3.0; 3],
        }
    }
}

impl TorqueGainsConfig {
    pub fn to_gains(&self) -> TorquePiGains {
        TorquePiGains {
            k_omega: Matrix3::from_diagonal(&Vector3::from(self.k_omega_diag)),
            k_integral: Matrix3::from_diagonal(&Vector3::from(self.k_integral_diag)),
        }
    }
}

/// Output saturation. A missing thrust bound defaults to 4·m·g.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SaturationConfig {
    pub thrust_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub moment_max: Option<f64>,
}

impl SaturationConfig {
    pub fn to_limits(&self, params: &QuadParams) -> SaturationLimits {
        let defaults = SaturationLimits::for_params(params);
        SaturationLimits {
            thrust_max: self.thrust_max.unwrap_or(defaults.thrust_max),
            omega_max: self.omega_max.unwrap_or(defaults.omega_max),
            moment_max: self.moment_max.unwrap_or(defaults.moment_max),
        }
    }
}

/// Standard deviations of the state-estimation noise proxy injected into the
/// controller's view of the state (the plant truth is never perturbed).
/// Zero everywhere means a perfect estimator.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Attitude perturbation angle per axis, rad.
    pub attitude_std: f64,
    /// Velocity perturbation per axis, m/s.
    pub velocity_std: f64,
    /// Position perturbation per axis, m.
    pub position_std: f64,
    /// Angular-velocity perturbation per axis, rad/s.
    pub omega_std: f64,
}

impl NoiseConfig {
    /// The default estimator-noise proxy used by the Monte-Carlo study.
    pub fn proxy() -> Self {
        NoiseConfig {
            attitude_std: 0.01,
            velocity_std: 0.02,
            position_std: 0.02,
            omega_std: 0.005,
        }
    }
}

/// Anti-windup clamps for the two integrators.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct WindupConfig {
    /// Per-component bound on ξ^i, m.
    pub xi_limit: f64,
    /// Per-component bound on the ω-error integral, rad·s.
    pub omega_limit: f64,
}

impl Default for WindupConfig {
    fn default() -> Self {
        WindupConfig {
            xi_limit: 5.0,
            omega_limit: 2.0,
        }
    }
}

/// Everything needed to run one closed-loop simulation.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub seed: u64,
    /// Simulated time, s.
    pub duration: f64,
    /// Control loop rate, Hz.
    pub control_rate_hz: u32,
    /// Plant RK4 substeps per control tick.
    pub plant_substeps: u32,
    pub variant: VariantArg,
    /// Enables the outer-loop integral state.
    pub integrator_enabled: bool,
    /// Position gain inside the integral integrand, 1/s.
    pub c1: f64,
    pub trajectory: TrajectoryConfig,
    pub initial: InitialCondition,
    pub params: ParamsConfig,
    /// Estimate scale factors (κ₁ mass, κ₂ E, κ₃ F, κ₄ D).
    pub kappa: [f64; 4],
    pub weights: WeightsConfig,
    pub torque_gains: TorqueGainsConfig,
    /// Actuator lag time constant, s (0 disables the filter).
    pub actuator_tau: f64,
    pub saturation: SaturationConfig,
    pub noise: NoiseConfig,
    pub windup: WindupConfig,
    /// Extra seconds of trajectory the gain schedule is designed over. The
    /// run flies the first `duration` seconds of that schedule, keeping the
    /// flown window clear of the end-of-horizon gain rolloff (the terminal
    /// weight is diagonal, so the last fraction of a second of any schedule
    /// sheds its integral action).
    pub schedule_padding: f64,
    /// Keep the per-tick series in the result.
    pub record_ticks: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 0,
            duration: 10.0,
            control_rate_hz: 400,
            plant_substeps: 5,
            variant: VariantArg::Se23Drag,
            integrator_enabled: true,
            c1: 1.0,
            trajectory: TrajectoryConfig::default(),
            initial: InitialCondition::default(),
            params: ParamsConfig::default(),
            kappa: [1.0; 4],
            weights: WeightsConfig::default(),
            torque_gains: TorqueGainsConfig::default(),
            actuator_tau: 0.02,
            saturation: SaturationConfig::default(),
            noise: NoiseConfig::default(),
            windup: WindupConfig::default(),
            schedule_padding: 2.0,
            record_ticks: false,
        }
    }
}

impl ScenarioConfig {
    /// Number of control ticks over the run.
    pub fn ticks(&self) -> usize {
        (self.duration * self.control_rate_hz as f64).round() as usize
    }

    /// Number of ticks the gain schedule is designed over.
    pub fn schedule_ticks(&self) -> usize {
        self.ticks() + (self.schedule_padding * self.control_rate_hz as f64).round() as usize
    }

    /// Control timestep, s.
    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate_hz as f64
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.duration > 0.0) {
            return Err(HarnessError::Config("duration must be positive".into()));
        }
        if self.control_rate_hz == 0 || self.plant_substeps == 0 {
            return Err(HarnessError::Config(
                "control rate and plant substeps must be positive".into(),
            ));
        }
        if self.ticks() < 2 {
            return Err(HarnessError::Config(
                "duration and control rate give a horizon shorter than 2 ticks".into(),
            ));
        }
        if self.c1 < 0.0 || self.actuator_tau < 0.0 || self.schedule_padding < 0.0 {
            return Err(HarnessError::Config(
                "c1, actuator_tau, and schedule_padding must be nonnegative".into(),
            ));
        }
        let n = &self.noise;
        if n.attitude_std < 0.0 || n.velocity_std < 0.0 || n.position_std < 0.0 || n.omega_std < 0.0
        {
            return Err(HarnessError::Config(
                "noise standard deviations must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Monte-Carlo batch settings.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct MonteCarloSettings {
    pub trials: usize,
    /// Standard deviations of κ₁..κ₄ about 1.
    pub sigma_kappa: [f64; 4],
    /// Initial-position standard deviation per axis, m.
    pub sigma_pos: f64,
    /// Initial-heading standard deviation, rad.
    pub heading_std: f64,
    /// Lower and upper error-bar percentiles.
    pub percentiles: [f64; 2],
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        MonteCarloSettings {
            trials: 100,
            sigma_kappa: [0.03, 0.15, 0.15, 0.15],
            sigma_pos: 1.0,
            heading_std: std::f64::consts::PI,
            percentiles: [2.5, 97.5],
        }
    }
}

impl MonteCarloSettings {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.trials < 1 {
            return Err(HarnessError::Config("trials must be at least 1".into()));
        }
        if self.sigma_kappa.iter().any(|s| *s < 0.0)
            || self.sigma_pos < 0.0
            || self.heading_std < 0.0
        {
            return Err(HarnessError::Config(
                "Monte-Carlo standard deviations must be nonnegative".into(),
            ));
        }
        if !(0.0..=100.0).contains(&self.percentiles[0])
            || !(0.0..=100.0).contains(&self.percentiles[1])
            || self.percentiles[0] >= self.percentiles[1]
        {
            return Err(HarnessError::Config(
                "percentiles must satisfy 0 <= lower < upper <= 100".into(),
            ));
        }
        Ok(())
    }
}

/// Root of a config file: scenario fields at the top level plus the
/// optional `[montecarlo]` table.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloSettings,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.scenario.validate()?;
        cfg.montecarlo.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }
}
