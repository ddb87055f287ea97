//! Result artifacts: per-tick CSV, per-experiment summary CSV, gain and
//! Jacobian dumps, and the TOML run manifest.
//!
//! Every writer is deterministic: floats render through Rust's shortest
//! round-trip formatting, rows follow input order, and the manifest carries
//! no timestamps, so re-running an experiment with the same seed reproduces
//! the files byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use se23_control::flatness::ReferenceSample;
use se23_control::linearize::DiscreteJacobians;
use se23_control::lqr::GainSchedule;

use crate::config::RunConfig;
use crate::experiments::{HeadingSweepRow, MonteCarloReport, UncertaintyRow};
use crate::scenario::{TickLog, TrialResult};
use crate::HarnessError;

pub const TICK_CSV_HEADER: &str = "t,xi_phi_x,xi_phi_y,xi_phi_z,xi_v_x,xi_v_y,xi_v_z,\
xi_r_x,xi_r_y,xi_r_z,xi_i_x,xi_i_y,xi_i_z,thrust,omega_cmd_x,omega_cmd_y,omega_cmd_z,\
moment_x,moment_y,moment_z";

pub fn tick_csv(ticks: &[TickLog]) -> String {
    let mut out = String::with_capacity(64 * (ticks.len() + 1));
    out.push_str(TICK_CSV_HEADER);
    out.push('\n');
    for l in ticks {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            l.t,
            l.xi_phi.x,
            l.xi_phi.y,
            l.xi_phi.z,
            l.xi_v.x,
            l.xi_v.y,
            l.xi_v.z,
            l.xi_r.x,
            l.xi_r.y,
            l.xi_r.z,
            l.xi_i.x,
            l.xi_i.y,
            l.xi_i.z,
            l.thrust,
            l.omega_cmd.x,
            l.omega_cmd.y,
            l.omega_cmd.z,
            l.moment.x,
            l.moment.y,
            l.moment.z,
        );
    }
    out
}

const RESULT_COLUMNS: &str = "rmse_phi,rmse_v,rmse_r,final2s_pos_err,final_pos_err";

fn result_cells(r: &TrialResult) -> String {
    format!(
        "{},{},{},{},{}",
        r.rmse_phi, r.rmse_v, r.rmse_r, r.final_window_pos_err, r.final_pos_err
    )
}

/// Summary for plain `simulate` runs: one row per result.
pub fn simulate_summary_csv(results: &[(String, TrialResult)]) -> String {
    let mut out = format!("label,seed,{RESULT_COLUMNS}\n");
    for (label, r) in results {
        let _ = writeln!(out, "{label},{},{}", r.seed, result_cells(r));
    }
    out
}

pub fn heading_sweep_csv(rows: &[HeadingSweepRow]) -> String {
    let mut out = format!("heading_deg,variant,{RESULT_COLUMNS}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            row.heading_deg,
            row.variant,
            result_cells(&row.result)
        );
    }
    out
}

pub fn uncertainty_csv(rows: &[UncertaintyRow]) -> String {
    let mut out = format!("variant,integrator,{RESULT_COLUMNS}\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{}",
            row.variant,
            row.integrator,
            result_cells(&row.result)
        );
    }
    out
}

/// Aggregate table of a Monte-Carlo batch: mean and percentile bounds per
/// controller and error component.
pub fn monte_carlo_summary_csv(report: &MonteCarloReport) -> String {
    let mut out = String::from("controller,component,mean,lower,upper\n");
    for stats in [&report.se23, &report.conventional] {
        for (component, s) in [("phi", stats.phi), ("vel", stats.vel), ("pos", stats.pos)] {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                stats.variant, component, s.mean, s.lower, s.upper
            );
        }
    }
    out
}

/// Per-trial table of a Monte-Carlo batch; one row per trial with both
/// controllers' RMSEs side by side.
pub fn monte_carlo_trials_csv(report: &MonteCarloReport) -> String {
    let mut out = String::from(
        "trial,seed,kappa1,kappa2,kappa3,kappa4,pos_x,pos_y,pos_z,heading,\
         se23_rmse_phi,se23_rmse_v,se23_rmse_r,conv_rmse_phi,conv_rmse_v,conv_rmse_r\n",
    );
    for t in &report.trials {
        let d = &t.draw;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            t.index,
            d.seed,
            d.kappa[0],
            d.kappa[1],
            d.kappa[2],
            d.kappa[3],
            d.position[0],
            d.position[1],
            d.position[2],
            d.heading,
            t.se23.rmse_phi,
            t.se23.rmse_v,
            t.se23.rmse_r,
            t.conventional.rmse_phi,
            t.conventional.rmse_v,
            t.conventional.rmse_r,
        );
    }
    out
}

/// Gain schedule as CSV: tick index followed by the 4×12 gain row-major.
pub fn gains_csv(schedule: &GainSchedule) -> String {
    let mut out = String::from("k");
    for r in 0..4 {
        for c in 0..12 {
            let _ = write!(out, ",k_{r}_{c}");
        }
    }
    out.push('\n');
    for (k, gain) in schedule.gains.iter().enumerate() {
        let _ = write!(out, "{k}");
        for r in 0..4 {
            for c in 0..12 {
                let _ = write!(out, ",{}", gain[(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}

/// Discrete Jacobian sequence as CSV: tick index, A row-major, B row-major.
pub fn jacobians_csv(jacobians: &[DiscreteJacobians]) -> String {
    let mut out = String::from("k");
    for r in 0..12 {
        for c in 0..12 {
            let _ = write!(out, ",a_{r}_{c}");
        }
    }
    for r in 0..12 {
        for c in 0..4 {
            let _ = write!(out, ",b_{r}_{c}");
        }
    }
    out.push('\n');
    for (k, j) in jacobians.iter().enumerate() {
        let _ = write!(out, "{k}");
        for r in 0..12 {
            for c in 0..12 {
                let _ = write!(out, ",{}", j.a[(r, c)]);
            }
        }
        for r in 0..12 {
            for c in 0..4 {
                let _ = write!(out, ",{}", j.b[(r, c)]);
            }
        }
        out.push('\n');
    }
    out
}

/// SHA-256 fingerprint of a reference track (canonical little-endian f64
/// bytes of every sample), keying gain-schedule artifacts to the trajectory
/// they were computed for.
pub fn track_fingerprint(track: &[ReferenceSample]) -> String {
    let mut hasher = Sha256::new();
    for s in track {
        let c = s.c_ar.matrix();
        for r in 0..3 {
            for col in 0..3 {
                hasher.update(c[(r, col)].to_le_bytes());
            }
        }
        for v in [&s.v_r, &s.r_r, &s.omega_r] {
            for i in 0..3 {
                hasher.update(v[i].to_le_bytes());
            }
        }
        hasher.update(s.thrust_r.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    hex
}

/// The run manifest written next to every result: what ran, with which
/// seed and code version, and the full config echo. No timestamps, so
/// identical runs produce identical manifests.
#[derive(Serialize)]
struct Manifest<'a> {
    run: ManifestRun<'a>,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct ManifestRun<'a> {
    command: &'a str,
    seed: u64,
    version: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    trajectory_sha256: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon_ticks: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestep: Option<f64>,
}

pub fn manifest_toml(
    command: &str,
    config: &RunConfig,
    trajectory_sha256: Option<&str>,
) -> String {
    let manifest = Manifest {
        run: ManifestRun {
            command,
            seed: config.scenario.seed,
            version: env!("CARGO_PKG_VERSION"),
            trajectory_sha256,
            horizon_ticks: trajectory_sha256.map(|_| config.scenario.ticks()),
            timestep: trajectory_sha256.map(|_| config.scenario.dt()),
        },
        config,
    };
    toml::to_string(&manifest).expect("manifest serializes")
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|source| HarnessError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}
