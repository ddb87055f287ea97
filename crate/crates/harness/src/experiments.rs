//! The three simulation studies.
//!
//! - [`heading_sweep`] — perfect environment, all four controller variants
//!   across a grid of initial heading errors.
//! - [`uncertainty_study`] — 180° initial heading with every parameter
//!   estimate scaled to 80% of truth, drag-free linearizations, with and
//!   without integral action.
//! - [`monte_carlo`] — randomized parameter scalings, initial position, and
//!   heading plus estimation noise and actuator lag, both error conventions
//!   on identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use std::f64::consts::PI;

use crate::config::{
    InitialCondition, MonteCarloSettings, NoiseConfig, RunConfig, ScenarioConfig, VariantArg,
};
use crate::scenario::{run_scenario, TrialResult};
use crate::HarnessError;

/// Default heading grid, degrees.
pub const HEADING_GRID_DEG: [f64; 7] = [0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0];

pub const ALL_VARIANTS: [VariantArg; 4] = [
    VariantArg::Se23Drag,
    VariantArg::Se23DragFree,
    VariantArg::ConventionalDrag,
    VariantArg::ConventionalDragFree,
];

/// One row of the heading-sweep table.
#[derive(Clone, Debug)]
pub struct HeadingSweepRow {
    pub heading_deg: f64,
    pub variant: VariantArg,
    pub result: TrialResult,
}

/// Strips a scenario down to the perfect environment: exact parameters,
/// no estimation noise, no actuator lag, reference-relative start.
fn perfect_environment(base: &ScenarioConfig) -> ScenarioConfig {
    ScenarioConfig {
        kappa: [1.0; 4],
        noise: NoiseConfig::default(),
        actuator_tau: 0.0,
        record_ticks: false,
        ..base.clone()
    }
}

/// Runs all four controller variants over a grid of initial heading errors
/// in a perfect environment.
pub fn heading_sweep(
    base: &ScenarioConfig,
    headings_deg: &[f64],
) -> Result<Vec<HeadingSweepRow>, HarnessError> {
    assert!(!headings_deg.is_empty(), "heading grid must be nonempty");
    let cases: Vec<(f64, VariantArg)> = headings_deg
        .iter()
        .flat_map(|&h| ALL_VARIANTS.into_iter().map(move |v| (h, v)))
        .collect();
    cases
        .into_par_iter()
        .map(|(heading_deg, variant)| {
            let cfg = ScenarioConfig {
                variant,
                initial: InitialCondition {
                    position: [0.0; 3],
                    heading: heading_deg.to_radians(),
                    absolute: false,
                },
                ..perfect_environment(base)
            };
            Ok(HeadingSweepRow {
                heading_deg,
                variant,
                result: run_scenario(&cfg)?,
            })
        })
        .collect()
}

/// One row of the parametric-uncertainty study.
#[derive(Clone, Debug)]
pub struct UncertaintyRow {
    pub variant: VariantArg,
    pub integrator: bool,
    pub result: TrialResult,
}

/// Repeats the 180°-heading scenario with all estimates at `scale` times
/// truth, for both error conventions with the drag-free linearization, with
/// and without integral action.
pub fn uncertainty_study(
    base: &ScenarioConfig,
    scale: f64,
) -> Result<Vec<UncertaintyRow>, HarnessError> {
    let cases: Vec<(VariantArg, bool)> = [VariantArg::Se23DragFree, VariantArg::ConventionalDragFree]
        .into_iter()
        .flat_map(|v| [true, false].into_iter().map(move |i| (v, i)))
        .collect();
    cases
        .into_par_iter()
        .map(|(variant, integrator)| {
            let cfg = ScenarioConfig {
                variant,
                integrator_enabled: integrator,
                kappa: [scale; 4],
                initial: InitialCondition {
                    position: [0.0; 3],
                    heading: PI,
                    absolute: false,
                },
                ..ScenarioConfig {
                    kappa: base.kappa,
                    ..perfect_environment(base)
                }
            };
            Ok(UncertaintyRow {
                variant,
                integrator,
                result: run_scenario(&cfg)?,
            })
        })
        .collect()
}

/// The random draws of one Monte-Carlo trial.
#[derive(Clone, Copy, Debug)]
pub struct TrialDraw {
    pub kappa: [f64; 4],
    pub position: [f64; 3],
    pub heading: f64,
    pub seed: u64,
}

/// Paired results of one trial: both error conventions on identical draws.
#[derive(Clone, Debug)]
pub struct TrialPair {
    pub index: usize,
    pub draw: TrialDraw,
    pub se23: TrialResult,
    pub conventional: TrialResult,
}

/// Aggregate statistics for one controller, per error component.
#[derive(Clone, Copy, Debug)]
pub struct ComponentStats {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Clone, Debug)]
pub struct ControllerStats {
    pub variant: VariantArg,
    pub phi: ComponentStats,
    pub vel: ComponentStats,
    pub pos: ComponentStats,
}

#[derive(Clone, Debug)]
pub struct MonteCarloReport {
    pub trials: Vec<TrialPair>,
    pub se23: ControllerStats,
    pub conventional: ControllerStats,
    pub percentiles: [f64; 2],
}

/// splitmix64 finalizer over (master, index); decorrelates child seeds even
/// for adjacent master seeds and trial indices.
pub fn derive_trial_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Empirical percentile by linear interpolation on the sorted sample, using
/// Weibull plotting positions h = (n+1)·p/100. With n = 100 trials the
/// [2.5, 97.5] band then brackets at least 95 of the samples, matching the
/// nominal coverage.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    assert!((0.0..=100.0).contains(&p));
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = ((n + 1) as f64 * p / 100.0 - 1.0).clamp(0.0, (n - 1) as f64);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn draw_trial(settings: &MonteCarloSettings, master_seed: u64, index: usize) -> TrialDraw {
    let seed = derive_trial_seed(master_seed, index as u64);
    // stream 1 holds the scenario draws; the in-run noise uses stream 0
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let normal = |rng: &mut ChaCha8Rng, mean: f64, std: f64| -> f64 {
        Normal::new(mean, std).expect("validated std").sample(rng)
    };
    let mut kappa = [0.0; 4];
    for (k, sigma) in kappa.iter_mut().zip(settings.sigma_kappa) {
        *k = normal(&mut rng, 1.0, sigma);
    }
    let mut position = [0.0; 3];
    for p in &mut position {
        *p = normal(&mut rng, 0.0, settings.sigma_pos);
    }
    let heading = normal(&mut rng, 0.0, settings.heading_std);
    TrialDraw {
        kappa,
        position,
        heading,
        seed,
    }
}

fn trial_scenario(base: &ScenarioConfig, variant: VariantArg, draw: &TrialDraw) -> ScenarioConfig {
    ScenarioConfig {
        variant,
        kappa: draw.kappa,
        seed: draw.seed,
        initial: InitialCondition {
            position: draw.position,
            heading: draw.heading,
            absolute: true,
        },
        record_ticks: false,
        ..base.clone()
    }
}

fn controller_stats(
    variant: VariantArg,
    results: &[&TrialResult],
    percentiles: [f64; 2],
) -> ControllerStats {
    let stats = |pick: fn(&TrialResult) -> f64| {
        let mut values: Vec<f64> = results.iter().map(|r| pick(r)).collect();
        values.sort_by(f64::total_cmp);
        ComponentStats {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            lower: percentile(&values, percentiles[0]),
            upper: percentile(&values, percentiles[1]),
        }
    };
    ControllerStats {
        variant,
        phi: stats(|r| r.rmse_phi),
        vel: stats(|r| r.rmse_v),
        pos: stats(|r| r.rmse_r),
    }
}

/// Runs the Monte-Carlo batch: per trial, κ scalings, initial position, and
/// heading are drawn from the configured normals, then both error
/// conventions run on the identical draw (same in-run noise stream). Trials
/// execute in parallel; aggregation is ordered by trial index; a failed
/// trial aborts the batch.
pub fn monte_carlo(cfg: &RunConfig) -> Result<MonteCarloReport, HarnessError> {
    cfg.montecarlo.validate()?;
    let base = &cfg.scenario;
    let settings = &cfg.montecarlo;
    let drag = if Into::<se23_control::linearize::Variant>::into(base.variant).includes_drag() {
        (VariantArg::Se23Drag, VariantArg::ConventionalDrag)
    } else {
        (VariantArg::Se23DragFree, VariantArg::ConventionalDragFree)
    };

    let trials: Vec<TrialPair> = (0..settings.trials)
        .into_par_iter()
        .map(|index| {
            let draw = draw_trial(settings, base.seed, index);
            let run = |variant| -> Result<TrialResult, HarnessError> {
                run_scenario(&trial_scenario(base, variant, &draw)).map_err(|e| {
                    HarnessError::Trial {
                        index,
                        source: Box::new(e),
                    }
                })
            };
            Ok(TrialPair {
                index,
                draw,
                se23: run(drag.0)?,
                conventional: run(drag.1)?,
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let se23_results: Vec<&TrialResult> = trials.iter().map(|t| &t.se23).collect();
    let conv_results: Vec<&TrialResult> = trials.iter().map(|t| &t.conventional).collect();
    Ok(MonteCarloReport {
        se23: controller_stats(drag.0, &se23_results, settings.percentiles),
        conventional: controller_stats(drag.1, &conv_results, settings.percentiles),
        percentiles: settings.percentiles,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn percentile_linear_interpolation() {
        let sorted = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&sorted, 0.0), 1.0);
        assert_eq!(percentile(&sorted, 100.0), 4.0);
        assert_relative_eq!(percentile(&sorted, 50.0), 2.5, epsilon = 1e-15);
        // Weibull position: h = 5·0.25 = 1.25 (1-indexed)
        assert_relative_eq!(percentile(&sorted, 25.0), 1.25, epsilon = 1e-15);
        assert_eq!(percentile(&[7.0], 42.0), 7.0);
    }

    #[test]
    fn percentile_band_covers_95_of_100_by_construction() {
        let sorted: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let lo = percentile(&sorted, 2.5);
        let hi = percentile(&sorted, 97.5);
        let inside = sorted.iter().filter(|v| **v >= lo && **v <= hi).count();
        assert!(inside >= 95, "only {inside} of 100 inside the band");
    }

    #[test]
    fn trial_seeds_are_deterministic_and_spread() {
        let a = derive_trial_seed(42, 0);
        let b = derive_trial_seed(42, 1);
        let c = derive_trial_seed(43, 0);
        assert_eq!(a, derive_trial_seed(42, 0));
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_sigmas_reproduce_the_nominal_draw() {
        let settings = MonteCarloSettings {
            sigma_kappa: [0.0; 4],
            sigma_pos: 0.0,
            heading_std: 0.0,
            ..Default::default()
        };
        let draw = draw_trial(&settings, 7, 3);
        assert_eq!(draw.kappa, [1.0; 4]);
        assert_eq!(draw.position, [0.0; 3]);
        assert_eq!(draw.heading, 0.0);
    }
}
