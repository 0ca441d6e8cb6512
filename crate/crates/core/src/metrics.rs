//! Trajectories, linepack accounting, pressure crossings, survival times
//! and empirical monotonicity verification.

use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySet;
use crate::error::{Error, Result};
use crate::gas::EosMode;
use crate::grid::PipeGrid;
use crate::network::Network;
use crate::sim::SolverConfig;
use crate::solver::Solver;
use crate::state::SystemState;
use crate::units::BAR_PA;

/// Default crossing threshold: 50 bar.
pub const DEFAULT_THRESHOLD_PA: f64 = 50.0 * BAR_PA;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub seed: u64,
    pub eos: EosMode,
    /// Supply nodes whose step control was clipped at max flow-rate.
    pub clipped_nodes: Vec<u32>,
    /// Earliest insult time of the scenario, if any.
    pub insult_time_s: Option<f64>,
    /// Running maximum of the junction balance residual [kg/s].
    pub max_kirchhoff_residual_kg_s: f64,
}

/// Sampled simulation output: nodal pressures, per-pipe and total linepack,
/// and the solver's integrated net injection (the mass-conservation
/// bookkeeping oracle).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub times_s: Vec<f64>,
    pub node_ids: Vec<u32>,
    pub pipe_ids: Vec<u32>,
    /// Row-major [sample][node].
    pub pressures_pa: Vec<f64>,
    /// Row-major [sample][pipe].
    pub linepack_kg: Vec<f64>,
    pub linepack_total_kg: Vec<f64>,
    /// Cumulative net injected mass at each sample [kg].
    pub injected_kg: Vec<f64>,
    pub meta: RunMeta,
}

impl Trajectory {
    pub fn empty(network: &Network, _cfg: &SolverConfig, meta: RunMeta) -> Self {
        Trajectory {
            times_s: Vec::new(),
            node_ids: network.nodes.iter().map(|n| n.id).collect(),
            pipe_ids: network.pipes.iter().map(|p| p.id).collect(),
            pressures_pa: Vec::new(),
            linepack_kg: Vec::new(),
            linepack_total_kg: Vec::new(),
            injected_kg: Vec::new(),
            meta,
        }
    }

    pub fn push_sample(&mut self, solver: &Solver, state: &SystemState, injected_kg: f64) {
        self.times_s.push(state.time_s);
        self.pressures_pa.extend(state.node_pressures(solver.eos()));
        let masses = solver.pipe_masses(state);
        self.linepack_total_kg.push(masses.iter().sum());
        self.linepack_kg.extend(masses);
        self.injected_kg.push(injected_kg);
    }

    pub fn n_samples(&self) -> usize {
        self.times_s.len()
    }

    #[inline]
    pub fn pressure(&self, sample: usize, node_idx: usize) -> f64 {
        self.pressures_pa[sample * self.node_ids.len() + node_idx]
    }

    pub fn node_index(&self, node_id: u32) -> Option<usize> {
        self.node_ids.iter().position(|&id| id == node_id)
    }

    pub fn pressure_series(&self, node_id: u32) -> Vec<f64> {
        let idx = self.node_index(node_id).expect("node in trajectory");
        (0..self.n_samples()).map(|k| self.pressure(k, idx)).collect()
    }

    pub fn linepack_of(&self, sample: usize, pipe_idx: usize) -> f64 {
        self.linepack_kg[sample * self.pipe_ids.len() + pipe_idx]
    }
}

/// Per-pipe and total stored mass of a state [kg].
pub fn linepack(
    state: &SystemState,
    grids: &[PipeGrid],
    network: &Network,
) -> Result<(Vec<f64>, f64)> {
    state.validate_shape(network, grids)?;
    let mut per_pipe = Vec::with_capacity(network.pipes.len());
    for (pi, (pipe, grid)) in network.pipes.iter().zip(grids).enumerate() {
        let rho_from = state.node_rho[network.node_index(pipe.from).unwrap()];
        let rho_to = state.node_rho[network.node_index(pipe.to).unwrap()];
        per_pipe.push(state.pipe_mass(pi, grid, pipe.area_m2(), rho_from, rho_to));
    }
    let total = per_pipe.iter().sum();
    Ok((per_pipe, total))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossingDirection {
    BelowMin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub node: u32,
    pub time_s: f64,
    pub direction: CrossingDirection,
}

/// One event per node per downward passage: the first sample strictly below
/// the threshold whose predecessor was at or above it. Events are returned
/// in chronological order (ties by node id).
pub fn detect_crossings(traj: &Trajectory, threshold_pa: f64) -> Result<Vec<CrossingEvent>> {
    if !(threshold_pa > 0.0) {
        return Err(Error::domain(format!(
            "crossing threshold must be > 0, got {threshold_pa}"
        )));
    }
    let mut events = Vec::new();
    for (n, &node) in traj.node_ids.iter().enumerate() {
        for k in 1..traj.n_samples() {
            if traj.pressure(k, n) < threshold_pa && traj.pressure(k - 1, n) >= threshold_pa {
                events.push(CrossingEvent {
                    node,
                    time_s: traj.times_s[k],
                    direction: CrossingDirection::BelowMin,
                });
            }
        }
    }
    events.sort_by(|a, b| {
        a.time_s
            .partial_cmp(&b.time_s)
            .unwrap()
            .then(a.node.cmp(&b.node))
    });
    Ok(events)
}

/// Survival time: elapsed time from the insult to the first crossing at any
/// node, or `None` when no crossing occurs before the horizon end.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalResult {
    pub tau_s: Option<f64>,
    pub first_node: Option<u32>,
}

pub fn survival_time(
    traj: &Trajectory,
    insult_time_s: f64,
    threshold_pa: f64,
) -> Result<SurvivalResult> {
    if traj.times_s.is_empty()
        || insult_time_s < traj.times_s[0]
        || insult_time_s > *traj.times_s.last().unwrap()
    {
        return Err(Error::domain(format!(
            "insult time {insult_time_s} s outside the trajectory span"
        )));
    }
    let first = detect_crossings(traj, threshold_pa)?
        .into_iter()
        .find(|e| e.time_s > insult_time_s);
    Ok(match first {
        Some(e) => SurvivalResult {
            tau_s: Some(e.time_s - insult_time_s),
            first_node: Some(e.node),
        },
        None => SurvivalResult {
            tau_s: None,
            first_node: None,
        },
    })
}

/// Outcome of the pointwise pressure-ordering comparison between a mild and
/// a severe run of the same scenario.
#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub violations: usize,
    pub max_violation_pa: f64,
    pub worst_time_s: Option<f64>,
    pub worst_node: Option<u32>,
    pub tau_mild_s: Option<f64>,
    pub tau_severe_s: Option<f64>,
    /// tau_severe <= tau_mild whenever both exist (vacuously true otherwise,
    /// with "no crossing" counting as an infinite survival time).
    pub tau_ordered: bool,
}

/// Verify pressure ordering: the severe run must sit at or below the mild
/// run at every node and sample (within `tol_pa`), given boundary sets with
/// pointwise-larger net withdrawal in the severe case.
pub fn check_monotonicity(
    mild: &Trajectory,
    mild_bc: &BoundarySet,
    severe: &Trajectory,
    severe_bc: &BoundarySet,
    insult_time_s: f64,
    threshold_pa: f64,
    tol_pa: f64,
) -> Result<MonotonicityReport> {
    if mild.node_ids != severe.node_ids {
        return Err(Error::validation(
            "monotonicity pair disagrees on node sets",
        ));
    }
    if mild.n_samples() != severe.n_samples() {
        return Err(Error::validation(format!(
            "monotonicity pair disagrees on sample counts ({} vs {})",
            mild.n_samples(),
            severe.n_samples()
        )));
    }
    // Precondition: ordered boundary sets (severe withdraws at least as much
    // everywhere, i.e. supplies at most as much).
    let horizon = *mild.times_s.last().unwrap();
    let mut t = 0.0;
    while t <= horizon {
        for &node in &mild.node_ids {
            let d_mild = mild_bc.withdrawal(node, t)?;
            let d_severe = severe_bc.withdrawal(node, t)?;
            if d_severe < d_mild - 1e-9 {
                return Err(Error::validation(format!(
                    "boundary sets are not severity-ordered at node {node}, t = {t} s \
                     (severe withdraws {d_severe}, mild {d_mild})"
                )));
            }
        }
        t += 60.0;
    }

    let mut report = MonotonicityReport {
        violations: 0,
        max_violation_pa: 0.0,
        worst_time_s: None,
        worst_node: None,
        tau_mild_s: None,
        tau_severe_s: None,
        tau_ordered: true,
    };
    for k in 0..mild.n_samples() {
        for n in 0..mild.node_ids.len() {
            let excess = severe.pressure(k, n) - mild.pressure(k, n);
            if excess > tol_pa {
                report.violations += 1;
                if excess > report.max_violation_pa {
                    report.max_violation_pa = excess;
                    report.worst_time_s = Some(mild.times_s[k]);
                    report.worst_node = Some(mild.node_ids[n]);
                }
            }
        }
    }
    report.tau_mild_s = survival_time(mild, insult_time_s, threshold_pa)?.tau_s;
    report.tau_severe_s = survival_time(severe, insult_time_s, threshold_pa)?.tau_s;
    report.tau_ordered = match (report.tau_severe_s, report.tau_mild_s) {
        (Some(s), Some(m)) => s <= m,
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (None, None) => true,
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::Profile;
    use crate::gas::EosMode;
    use crate::testutil::{two_node_network, uniform_grids};

    fn synthetic_trajectory(node_series: Vec<(u32, Vec<f64>)>) -> Trajectory {
        let n_samples = node_series[0].1.len();
        let times: Vec<f64> = (0..n_samples).map(|k| k as f64 * 300.0).collect();
        let node_ids: Vec<u32> = node_series.iter().map(|(id, _)| *id).collect();
        let mut pressures = Vec::new();
        for k in 0..n_samples {
            for (_, series) in &node_series {
                pressures.push(series[k]);
            }
        }
        Trajectory {
            times_s: times,
            node_ids,
            pipe_ids: vec![],
            pressures_pa: pressures,
            linepack_kg: vec![],
            linepack_total_kg: vec![0.0; n_samples],
            injected_kg: vec![0.0; n_samples],
            meta: RunMeta {
                scenario: "synthetic".into(),
                seed: 0,
                eos: EosMode::Cnga,
                clipped_nodes: vec![],
                insult_time_s: None,
                max_kirchhoff_residual_kg_s: 0.0,
            },
        }
    }

    #[test]
    fn linepack_uniform_is_rho_s_l() {
        let (network, _) = two_node_network(EosMode::Cnga);
        let grids = uniform_grids(&network, 1000.0);
        let state = SystemState::uniform(&network, &grids, 55.0);
        let (per_pipe, total) = linepack(&state, &grids, &network).unwrap();
        let expected = 55.0 * network.pipes[0].area_m2() * network.pipes[0].length_m;
        assert!((per_pipe[0] - expected).abs() < 1e-9 * expected);
        assert_eq!(total, per_pipe[0]);

        let doubled = SystemState::uniform(&network, &grids, 110.0);
        let (_, total2) = linepack(&doubled, &grids, &network).unwrap();
        assert!((total2 - 2.0 * total).abs() < 1e-9 * total2);
    }

    #[test]
    fn no_crossings_above_threshold() {
        let traj = synthetic_trajectory(vec![(1, vec![60e5; 10]), (2, vec![61e5; 10])]);
        assert!(detect_crossings(&traj, DEFAULT_THRESHOLD_PA).unwrap().is_empty());
    }

    #[test]
    fn ramp_crossing_detected_at_first_sample_below() {
        let series: Vec<f64> = (0..10).map(|k| 52e5 - k as f64 * 0.5e5).collect();
        // Crosses 50 bar strictly below at k = 5 (49.5 bar).
        let traj = synthetic_trajectory(vec![(1, series)]);
        let events = detect_crossings(&traj, DEFAULT_THRESHOLD_PA).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].node, 1);
        assert_eq!(events[0].time_s, 5.0 * 300.0);
    }

    #[test]
    fn two_nodes_cross_in_chronological_order() {
        let early: Vec<f64> = (0..10).map(|k| if k >= 3 { 49e5 } else { 52e5 }).collect();
        let late: Vec<f64> = (0..10).map(|k| if k >= 7 { 48e5 } else { 52e5 }).collect();
        let traj = synthetic_trajectory(vec![(2, late), (1, early)]);
        let events = detect_crossings(&traj, DEFAULT_THRESHOLD_PA).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].node, 1);
        assert_eq!(events[1].node, 2);
        assert!(events[0].time_s < events[1].time_s);
    }

    #[test]
    fn survival_ignores_pre_insult_crossings() {
        // Dips below 50 bar at k = 2, recovers, then crosses again at k = 8.
        let series = vec![52e5, 51e5, 49e5, 51e5, 52e5, 52e5, 52e5, 51e5, 47e5, 47e5];
        let traj = synthetic_trajectory(vec![(1, series)]);
        let s = survival_time(&traj, 4.0 * 300.0, DEFAULT_THRESHOLD_PA).unwrap();
        assert_eq!(s.tau_s, Some(4.0 * 300.0));
        assert_eq!(s.first_node, Some(1));
    }

    #[test]
    fn survival_none_without_crossing() {
        let traj = synthetic_trajectory(vec![(1, vec![60e5; 10])]);
        let s = survival_time(&traj, 300.0, DEFAULT_THRESHOLD_PA).unwrap();
        assert_eq!(s.tau_s, None);
        assert_eq!(s.first_node, None);
    }

    #[test]
    fn survival_constructed_four_hours() {
        let n = 100;
        let insult_k = 10usize;
        let cross_k = insult_k + 48; // 48 * 300 s = 4 h after the insult
        let series: Vec<f64> = (0..n)
            .map(|k| if k >= cross_k { 49e5 } else { 55e5 })
            .collect();
        let traj = synthetic_trajectory(vec![(1, series)]);
        let s = survival_time(&traj, insult_k as f64 * 300.0, DEFAULT_THRESHOLD_PA).unwrap();
        assert_eq!(s.tau_s, Some(4.0 * 3600.0));
    }

    #[test]
    fn monotonicity_identical_runs_pass() {
        let traj = synthetic_trajectory(vec![(1, vec![60e5; 10]), (2, vec![58e5; 10])]);
        let mut bc = BoundarySet::new();
        bc.insert_withdrawal(Profile::constant(1, -10.0));
        bc.insert_withdrawal(Profile::constant(2, 10.0));
        let report =
            check_monotonicity(&traj, &bc, &traj, &bc, 300.0, DEFAULT_THRESHOLD_PA, 100.0).unwrap();
        assert_eq!(report.violations, 0);
        assert!(report.tau_ordered);
    }

    #[test]
    fn monotonicity_rejects_unordered_boundaries() {
        let traj = synthetic_trajectory(vec![(1, vec![60e5; 10]), (2, vec![58e5; 10])]);
        let mut mild = BoundarySet::new();
        mild.insert_withdrawal(Profile::constant(2, 10.0));
        let mut severe = BoundarySet::new();
        severe.insert_withdrawal(Profile::constant(2, 5.0)); // withdraws less
        let err = check_monotonicity(
            &traj,
            &mild,
            &traj,
            &severe,
            300.0,
            DEFAULT_THRESHOLD_PA,
            100.0,
        )
        .unwrap_err();
        assert!(err.to_string().contains("severity-ordered"));
    }
}
