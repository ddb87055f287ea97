//! `se23-sim` — batch simulation CLI.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use se23_control::controller::EstimatedParams;
use se23_control::flatness::build_reference_track;
use se23_control::linearize::{continuous_jacobians, discretize_zoh, Variant};
use se23_control::lqr::riccati_sweep;

use se23_harness::config::{RunConfig, VariantArg};
use se23_harness::experiments::{heading_sweep, monte_carlo, uncertainty_study, HEADING_GRID_DEG};
use se23_harness::output;
use se23_harness::scenario::run_scenario;

#[derive(Parser)]
#[command(
    name = "se23-sim",
    version,
    about = "Finite-horizon LQR quadrotor tracking on SE2(3): scenario runner and batch studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML config file; defaults apply for anything omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for CSV artifacts and the manifest.
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
    /// Override the controller variant.
    #[arg(long)]
    variant: Option<VariantArg>,
    /// Output format (only csv is supported).
    #[arg(long, default_value = "csv")]
    format: String,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed-loop scenario and write per-tick plus summary CSVs.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        /// Skip the per-tick CSV.
        #[arg(long)]
        no_ticks: bool,
    },
    /// Run all four controller variants over a grid of initial heading errors.
    SweepHeading {
        #[command(flatten)]
        common: CommonArgs,
        /// Heading grid in degrees.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        headings: Option<Vec<f64>>,
    },
    /// 80% parameter-scaling study, with and without integral action.
    Uncertainty {
        #[command(flatten)]
        common: CommonArgs,
        /// Estimate scale factor applied to mass and drag matrices.
        #[arg(long, default_value_t = 0.8)]
        scale: f64,
    },
    /// Seeded Monte-Carlo batch over both error conventions.
    MonteCarlo {
        #[command(flatten)]
        common: CommonArgs,
        /// Override the number of trials.
        #[arg(long)]
        trials: Option<usize>,
    },
    /// Compute and dump the offline gain schedule for the configured scenario.
    Gains {
        #[command(flatten)]
        common: CommonArgs,
        /// Also dump the discrete Jacobian sequence.
        #[arg(long)]
        dump_jacobians: bool,
    },
}

fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    if common.format != "csv" {
        bail!("unsupported output format `{}` (only csv)", common.format);
    }
    let mut cfg = match &common.config {
        Some(path) => RunConfig::from_path(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
    }
    if let Some(variant) = common.variant {
        cfg.scenario.variant = variant;
    }
    Ok(cfg)
}

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, no_ticks } => {
            let mut cfg = load_config(&common)?;
            cfg.scenario.record_ticks = !no_ticks;
            let result = run_scenario(&cfg.scenario)?;
            println!(
                "simulate variant={} seed={} rmse_phi={:.6} rmse_v={:.6} rmse_r={:.6}",
                cfg.scenario.variant,
                cfg.scenario.seed,
                result.rmse_phi,
                result.rmse_v,
                result.rmse_r
            );
            if let Some(ticks) = &result.ticks {
                output::write_file(&common.out_dir, "ticks.csv", &output::tick_csv(ticks))?;
            }
            let summary =
                output::simulate_summary_csv(&[(cfg.scenario.variant.to_string(), result)]);
            output::write_file(&common.out_dir, "summary.csv", &summary)?;
            output::write_file(
                &common.out_dir,
                "manifest.toml",
                &output::manifest_toml("simulate", &cfg, None),
            )?;
        }
        Command::SweepHeading { common, headings } => {
            let cfg = load_config(&common)?;
            let grid = headings.unwrap_or_else(|| HEADING_GRID_DEG.to_vec());
            let rows = heading_sweep(&cfg.scenario, &grid)?;
            for row in &rows {
                println!(
                    "heading={:>5.1}deg variant={:<22} rmse_phi={:.4} rmse_v={:.4} rmse_r={:.4}",
                    row.heading_deg,
                    row.variant.to_string(),
                    row.result.rmse_phi,
                    row.result.rmse_v,
                    row.result.rmse_r
                );
            }
            output::write_file(&common.out_dir, "summary.csv", &output::heading_sweep_csv(&rows))?;
            output::write_file(
                &common.out_dir,
                "manifest.toml",
                &output::manifest_toml("sweep-heading", &cfg, None),
            )?;
        }
        Command::Uncertainty { common, scale } => {
            let cfg = load_config(&common)?;
            let rows = uncertainty_study(&cfg.scenario, scale)?;
            for row in &rows {
                println!(
                    "variant={:<22} integrator={} final2s_pos_err={:.4} rmse_r={:.4}",
                    row.variant.to_string(),
                    row.integrator,
                    row.result.final_window_pos_err,
                    row.result.rmse_r
                );
            }
            output::write_file(&common.out_dir, "summary.csv", &output::uncertainty_csv(&rows))?;
            output::write_file(
                &common.out_dir,
                "manifest.toml",
                &output::manifest_toml("uncertainty", &cfg, None),
            )?;
        }
        Command::MonteCarlo { common, trials } => {
            let mut cfg = load_config(&common)?;
            if let Some(t) = trials {
                cfg.montecarlo.trials = t;
            }
            let report = monte_carlo(&cfg)?;
            for stats in [&report.se23, &report.conventional] {
                println!(
                    "controller={:<22} mean rmse: phi={:.4} vel={:.4} pos={:.4}",
                    stats.variant.to_string(),
                    stats.phi.mean,
                    stats.vel.mean,
                    stats.pos.mean
                );
            }
            output::write_file(
                &common.out_dir,
                "summary.csv",
                &output::monte_carlo_summary_csv(&report),
            )?;
            output::write_file(
                &common.out_dir,
                "trials.csv",
                &output::monte_carlo_trials_csv(&report),
            )?;
            output::write_file(
                &common.out_dir,
                "manifest.toml",
                &output::manifest_toml("monte-carlo", &cfg, None),
            )?;
        }
        Command::Gains {
            common,
            dump_jacobians,
        } => {
            let cfg = load_config(&common)?;
            let scenario = &cfg.scenario;
            let params = scenario.params.to_quad_params();
            let est = EstimatedParams::scaled(&params, scenario.kappa);
            let variant: Variant = scenario.variant.into();
            let n = scenario.schedule_ticks();
            let dt = scenario.dt();
            let c1 = if scenario.integrator_enabled {
                scenario.c1
            } else {
                0.0
            };
            let track =
                build_reference_track(scenario.trajectory.build().as_ref(), dt, n, &est)?;
            let design = est.to_quad_params(&params);
            let jacobians: Vec<_> = track[..n]
                .iter()
                .map(|s| discretize_zoh(&continuous_jacobians(s, &design, c1, variant), dt))
                .collect();
            let weights = scenario.weights.to_weights(scenario.integrator_enabled)?;
            let schedule = riccati_sweep(&jacobians, &weights)?;
            let fingerprint = output::track_fingerprint(&track);
            println!(
                "gains variant={} horizon={} dt={} trajectory_sha256={}",
                scenario.variant, n, dt, fingerprint
            );
            output::write_file(&common.out_dir, "gains.csv", &output::gains_csv(&schedule))?;
            output::write_file(
                &common.out_dir,
                "reference.csv",
                &se23_control::flatness::reference_track_csv(&track, dt),
            )?;
            if dump_jacobians {
                output::write_file(
                    &common.out_dir,
                    "jacobians.csv",
                    &output::jacobians_csv(&jacobians),
                )?;
            }
            output::write_file(
                &common.out_dir,
                "manifest.toml",
                &output::manifest_toml("gains", &cfg, Some(&fingerprint)),
            )?;
        }
    }
    Ok(())
}
