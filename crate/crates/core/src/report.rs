//! Bit-stable file export: trajectory and quantile CSVs, ensemble summary
//! JSON, and state files. All CSVs are SI with the unit embedded in the
//! header; floats use Rust's shortest round-trip formatting, which is
//! locale-independent.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::ensemble::{Band, EnsembleStats};
use crate::error::{Error, Result};
use crate::grid::PipeGrid;
use crate::metrics::{CrossingEvent, Trajectory};
use crate::network::Network;
use crate::state::{PipeField, SystemState};
use crate::units::HOUR_S;

fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    std::fs::write(path.as_ref(), contents).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.as_ref().display()),
        ))
    })
}

/// Long-format nodal pressures: `time_s,node_id,pressure_Pa`.
pub fn render_pressures_csv(traj: &Trajectory) -> String {
    let mut out = String::from("time_s,node_id,pressure_Pa\n");
    for k in 0..traj.n_samples() {
        for (n, id) in traj.node_ids.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", traj.times_s[k], id, traj.pressure(k, n));
        }
    }
    out
}

/// Wide-format linepack: per-pipe columns plus the total.
pub fn render_linepack_csv(traj: &Trajectory) -> String {
    let mut out = String::from("time_s");
    for id in &traj.pipe_ids {
        let _ = write!(out, ",linepack_pipe_{id}_kg");
    }
    out.push_str(",linepack_total_kg,injected_total_kg\n");
    for k in 0..traj.n_samples() {
        let _ = write!(out, "{}", traj.times_s[k]);
        for p in 0..traj.pipe_ids.len() {
            let _ = write!(out, ",{}", traj.linepack_of(k, p));
        }
        let _ = writeln!(
            out,
            ",{},{}",
            traj.linepack_total_kg[k], traj.injected_kg[k]
        );
    }
    out
}

pub fn write_trajectory_csvs(
    dir: impl AsRef<Path>,
    traj: &Trajectory,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let pressures = dir.join("pressures.csv");
    let linepack = dir.join("linepack.csv");
    write_file(&pressures, &render_pressures_csv(traj))?;
    write_file(&linepack, &render_linepack_csv(traj))?;
    Ok(vec![pressures, linepack])
}

pub fn render_crossings_csv(events: &[CrossingEvent], threshold_pa: f64) -> String {
    let mut out = String::from("node_id,time_s,time_h,direction,threshold_Pa\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},below_min,{}",
            e.node,
            e.time_s,
            e.time_s / HOUR_S,
            threshold_pa
        );
    }
    out
}

pub fn write_crossings_csv(
    path: impl AsRef<Path>,
    events: &[CrossingEvent],
    threshold_pa: f64,
) -> Result<()> {
    write_file(path, &render_crossings_csv(events, threshold_pa))
}

/// Quantile CSV with the columns `time_s,q125,q375,median,q625,q875`.
pub fn render_quantile_csv(times_s: &[f64], band: &Band) -> String {
    let mut out = String::from("time_s,q125,q375,median,q625,q875\n");
    for k in 0..times_s.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            times_s[k], band.q125[k], band.q375[k], band.median[k], band.q625[k], band.q875[k]
        );
    }
    out
}

/// Write per-quantity quantile CSVs; returns the file list for the summary
/// and manifest.
pub fn write_quantile_csvs(
    dir: impl AsRef<Path>,
    stats: &EnsembleStats,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let mut files = Vec::new();
    for (n, id) in stats.node_ids.iter().enumerate() {
        let path = dir.join(format!("pressure_node_{id}.csv"));
        write_file(&path, &render_quantile_csv(&stats.times_s, &stats.pressure_bands[n]))?;
        files.push(path);
    }
    let path = dir.join("linepack_total.csv");
    write_file(&path, &render_quantile_csv(&stats.times_s, &stats.linepack_total_band))?;
    files.push(path);
    Ok(files)
}

#[derive(Serialize)]
struct EnsembleSummaryFile<'a> {
    scenario: &'a str,
    base_seed: u64,
    n_replicas: usize,
    threshold_pa: f64,
    insult_time_s: Option<f64>,
    tau_stats: &'a crate::ensemble::TauStats,
    crossing_histogram: &'a std::collections::BTreeMap<u32, usize>,
    total_crossing_events: usize,
    pre_insult_crossings: usize,
    clipped_nodes: &'a [u32],
    quantile_files: Vec<String>,
}

/// Deterministic ensemble summary JSON with references to the quantile
/// files (relative names).
pub fn render_ensemble_summary(stats: &EnsembleStats, quantile_files: &[std::path::PathBuf]) -> String {
    let summary = EnsembleSummaryFile {
        scenario: &stats.scenario,
        base_seed: stats.base_seed,
        n_replicas: stats.n_replicas,
        threshold_pa: stats.threshold_pa,
        insult_time_s: stats.insult_time_s,
        tau_stats: &stats.tau,
        crossing_histogram: &stats.crossing_histogram,
        total_crossing_events: stats.total_crossing_events,
        pre_insult_crossings: stats.pre_insult_crossings,
        clipped_nodes: &stats.clipped_nodes,
        quantile_files: quantile_files
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("serializable summary");
    text.push('\n');
    text
}

pub fn write_ensemble_summary(
    path: impl AsRef<Path>,
    stats: &EnsembleStats,
    quantile_files: &[std::path::PathBuf],
) -> Result<()> {
    write_file(path, &render_ensemble_summary(stats, quantile_files))
}

// ---------------------------------------------------------------------------
// State files (init-steady output)

#[derive(Serialize, serde::Deserialize)]
struct StatePipeFile {
    pipe_id: u32,
    rho_kg_m3: Vec<f64>,
    phi_kg_m2_s: Vec<f64>,
}

#[derive(Serialize, serde::Deserialize)]
struct StateFile {
    time_s: f64,
    node_ids: Vec<u32>,
    node_rho_kg_m3: Vec<f64>,
    pipes: Vec<StatePipeFile>,
}

pub fn write_state_json(
    path: impl AsRef<Path>,
    network: &Network,
    grids: &[PipeGrid],
    state: &SystemState,
) -> Result<()> {
    state.validate_shape(network, grids)?;
    let file = StateFile {
        time_s: state.time_s,
        node_ids: network.nodes.iter().map(|n| n.id).collect(),
        node_rho_kg_m3: state.node_rho.clone(),
        pipes: state
            .fields
            .iter()
            .zip(grids)
            .map(|(f, g)| StatePipeFile {
                pipe_id: g.pipe_id,
                rho_kg_m3: f.rho.clone(),
                phi_kg_m2_s: f.phi.clone(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&file).expect("serializable state");
    text.push('\n');
    write_file(path, &text)
}

pub fn read_state_json(
    path: impl AsRef<Path>,
    network: &Network,
    grids: &[PipeGrid],
) -> Result<SystemState> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let file: StateFile =
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let expected_ids: Vec<u32> = network.nodes.iter().map(|n| n.id).collect();
    if file.node_ids != expected_ids {
        return Err(Error::validation(format!(
            "{}: node ids do not match the network",
            path.display()
        )));
    }
    let mut fields = Vec::with_capacity(grids.len());
    for grid in grids {
        let pipe = file
            .pipes
            .iter()
            .find(|p| p.pipe_id == grid.pipe_id)
            .ok_or_else(|| {
                Error::validation(format!(
                    "{}: state file lacks pipe {}",
                    path.display(),
                    grid.pipe_id
                ))
            })?;
        fields.push(PipeField {
            rho: pipe.rho_kg_m3.clone(),
            phi: pipe.phi_kg_m2_s.clone(),
        });
    }
    let state = SystemState {
        time_s: file.time_s,
        fields,
        node_rho: file.node_rho_kg_m3,
    };
    state.validate_shape(network, grids)?;
    Ok(state)
}

/// Two-column profile CSV (`time_s,flow_kg_s`), the format accepted by
/// scenario CSV references.
pub fn render_profile_csv(profile: &crate::boundary::Profile) -> String {
    let mut out = String::from("time_s,flow_kg_s\n");
    for (t, v) in profile.times().iter().zip(profile.values()) {
        let _ = writeln!(out, "{t},{v}");
    }
    out
}

pub fn write_profile_csv(path: impl AsRef<Path>, profile: &crate::boundary::Profile) -> Result<()> {
    write_file(path, &render_profile_csv(profile))
}
