//! Geometric optimal control of a quadrotor on the matrix Lie group SE₂(3).
//!
//! The crate is organized bottom-up:
//!
//! - [`lie`] — SO(3)/SE₂(3) exponential and logarithmic maps, left Jacobian,
//!   group composition.
//! - [`dynamics`] — nonlinear rigid-body plant with rotor drag, RK4 stepping,
//!   actuator lag, and output saturation.
//! - [`flatness`] — differential-flatness reference generation: attitude and
//!   feedforward thrust from a flat-output trajectory, angular velocity from
//!   the discrete Poisson equation.
//! - [`linearize`] — continuous-time error-state Jacobians about the
//!   reference (invariant and conventional error definitions, with and
//!   without drag), zero-order-hold discretization, and a finite-difference
//!   self-check.
//! - [`lqr`] — finite-horizon discrete Riccati backward sweep producing the
//!   offline gain schedule.
//! - [`controller`] — tracking-error extraction, gain-scheduled feedback plus
//!   feedforward, integral augmentation, and the inner PI torque loop.

pub mod controller;
pub mod dynamics;
pub mod flatness;
pub mod lie;
pub mod linearize;
pub mod lqr;

pub use controller::{ControlCommand, ControllerState, EstimatedParams, TorquePiGains};
pub use dynamics::{ActuatorCommand, ActuatorFilter, PlantState, QuadParams, SaturationLimits, WrenchInput};
pub use flatness::{FlatOutput, FlatTrajectory, Helix, HoverPoint, ReferenceSample};
pub use lie::{PoseSE23, Rotation, TangentSE23};
pub use linearize::{DiscreteJacobians, ErrorJacobians, Variant};
pub use lqr::{GainSchedule, LqrWeights};
