//! Simulation driver: configuration, initialization, time marching and
//! trajectory sampling.

use serde::{Deserialize, Serialize};

use crate::boundary::BoundarySet;
use crate::error::{Error, Result};
use crate::gas::EosMode;
use crate::grid::{discretize, PipeGrid};
use crate::metrics::{RunMeta, Trajectory};
use crate::network::Network;
use crate::scenario::{compose, Scenario};
use crate::solver::Solver;
use crate::state::SystemState;
use crate::steady::{steady_state_init, SteadyReport};

/// Time-step policy. `Adaptive` recomputes the CFL bound from the current
/// state every step; `FixedConservative` uses the state-independent bound
/// cfl * min(dx) / sqrt(RT), which gives paired runs identical step grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DtPolicy {
    #[default]
    Adaptive,
    FixedConservative,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub target_dx_m: f64,
    pub cfl: f64,
    pub output_cadence_s: f64,
    pub eos_mode: EosMode,
    /// Relative linepack drift per simulated hour accepted at initialization.
    pub drift_tolerance: f64,
    pub max_relax_hours: f64,
    /// Reference pressure pinned at the reference supply node during
    /// initialization.
    pub ref_pressure_pa: f64,
    /// Reference node id; defaults to the lowest-id supply node.
    pub ref_node: Option<u32>,
    pub dt_policy: DtPolicy,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            target_dx_m: 1000.0,
            cfl: 0.8,
            output_cadence_s: 300.0,
            eos_mode: EosMode::Cnga,
            drift_tolerance: 1e-6,
            max_relax_hours: 48.0,
            ref_pressure_pa: 70e5,
            ref_node: None,
            dt_policy: DtPolicy::Adaptive,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.target_dx_m > 0.0) {
            return Err(Error::validation("target_dx_m must be > 0"));
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::validation("cfl must be in (0, 1)"));
        }
        if !(self.output_cadence_s > 0.0) {
            return Err(Error::validation("output_cadence_s must be > 0"));
        }
        if !(self.drift_tolerance > 0.0) {
            return Err(Error::validation("drift_tolerance must be > 0"));
        }
        if !(self.ref_pressure_pa > 0.0) {
            return Err(Error::validation("ref_pressure_pa must be > 0"));
        }
        Ok(())
    }

    pub fn resolve_ref_node(&self, network: &Network) -> Result<u32> {
        match self.ref_node {
            Some(id) => {
                network.require_node(id)?;
                Ok(id)
            }
            None => network
                .supply_ids()
                .into_iter()
                .min()
                .ok_or_else(|| Error::validation("network has no supply node")),
        }
    }
}

/// Steady initial state for the boundary values at t = 0.
///
/// The steady solve needs balanced loads; supplies at t = 0 are scaled
/// proportionally to match the total withdrawal at t = 0 (the boundary
/// profiles themselves are untouched, so any t = 0 imbalance simply enters
/// the transient as a fill or drain phase).
pub fn init_state(
    network: &Network,
    grids: &[PipeGrid],
    cfg: &SolverConfig,
    bc: &BoundarySet,
) -> Result<(SystemState, SteadyReport)> {
    let props = network.gas_properties(cfg.eos_mode)?;
    let mut injections: Vec<(u32, f64)> = network
        .nodes
        .iter()
        .map(|n| Ok((n.id, -bc.withdrawal(n.id, 0.0)?)))
        .collect::<Result<_>>()?;
    let supply_total: f64 = injections.iter().map(|q| q.1.max(0.0)).sum();
    let demand_total: f64 = injections.iter().map(|q| (-q.1).max(0.0)).sum();
    if supply_total > 0.0 && demand_total > 0.0 {
        let scale = demand_total / supply_total;
        for q in injections.iter_mut() {
            if q.1 > 0.0 {
                q.1 *= scale;
            }
        }
    }
    steady_state_init(
        network,
        grids,
        props,
        &injections,
        cfg.resolve_ref_node(network)?,
        cfg.ref_pressure_pa,
        cfg.cfl,
        cfg.drift_tolerance,
        cfg.max_relax_hours,
    )
}

/// Integrate composed boundary conditions from t = 0 to the horizon,
/// sampling nodal pressures and linepack at the output cadence
/// (nearest-step sampling, no interpolation).
pub fn simulate_boundary(
    network: &Network,
    grids: &[PipeGrid],
    cfg: &SolverConfig,
    bc: &BoundarySet,
    horizon_s: f64,
    initial: SystemState,
    meta: RunMeta,
) -> Result<Trajectory> {
    cfg.validate()?;
    if !(horizon_s >= 0.0) {
        return Err(Error::validation("horizon must be >= 0"));
    }
    if !bc.covers(horizon_s) {
        return Err(Error::domain(
            "boundary profiles do not cover the simulation horizon",
        ));
    }
    let mut solver = Solver::new(network, grids, network.gas_properties(cfg.eos_mode)?)?;
    let mut state = initial;
    state.validate_shape(network, grids)?;
    state.time_s = 0.0;

    let mut traj = Trajectory::empty(network, cfg, meta);
    let mut injected_total = 0.0;
    let mut max_residual: f64 = 0.0;

    let fixed_dt = match cfg.dt_policy {
        DtPolicy::Adaptive => None,
        DtPolicy::FixedConservative => Some(solver.conservative_dt(cfg.cfl)?),
    };

    let n_samples = (horizon_s / cfg.output_cadence_s).floor() as usize + 1;
    let mut next_sample = 0usize;

    // First sample is the initial state.
    traj.push_sample(&solver, &state, injected_total);
    next_sample += 1;

    while next_sample < n_samples || state.time_s < horizon_s {
        let dt_bound = match fixed_dt {
            Some(dt) => dt,
            None => solver.cfl_dt(&state, cfg.cfl)?,
        };
        let dt = dt_bound.min(horizon_s - state.time_s).max(0.0);
        if dt <= 0.0 {
            break;
        }
        // Nearest-step sampling: if the upcoming step would pass the target
        // and the current state is closer, sample before stepping.
        while next_sample < n_samples {
            let target = next_sample as f64 * cfg.output_cadence_s;
            if state.time_s + dt < target {
                break;
            }
            if (target - state.time_s).abs() <= (state.time_s + dt - target).abs() {
                traj.push_sample(&solver, &state, injected_total);
                next_sample += 1;
            } else {
                break;
            }
        }
        let stats = solver.advance(&mut state, bc, dt)?;
        injected_total += stats.injected_kg;
        max_residual = max_residual.max(stats.max_kirchhoff_residual_kg_s);
        while next_sample < n_samples {
            let target = next_sample as f64 * cfg.output_cadence_s;
            if state.time_s >= target {
                traj.push_sample(&solver, &state, injected_total);
                next_sample += 1;
            } else {
                break;
            }
        }
    }
    // Horizon shorter than one cadence interval: the single initial sample
    // already stands.
    while next_sample < n_samples {
        traj.push_sample(&solver, &state, injected_total);
        next_sample += 1;
    }
    traj.meta.max_kirchhoff_residual_kg_s = max_residual;
    Ok(traj)
}

/// Full driver: compose the scenario with `cfg.seed`, build the steady
/// initial state from the noise-free base at t = 0, and integrate.
pub fn simulate(network: &Network, scenario: &Scenario, cfg: &SolverConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let grids = discretize(network, cfg.target_dx_m)?;
    let (bc, compose_meta) = compose(network, scenario, cfg.seed)?;
    let (bc0, _) = compose(network, &scenario.without_noise(), cfg.seed)?;
    let (initial, _) = init_state(network, &grids, cfg, &bc0)?;
    let meta = RunMeta {
        scenario: scenario.name.clone(),
        seed: cfg.seed,
        eos: cfg.eos_mode,
        clipped_nodes: compose_meta.clipped_nodes.clone(),
        insult_time_s: scenario.first_insult_s(),
        max_kirchhoff_residual_kg_s: 0.0,
    };
    simulate_boundary(network, &grids, cfg, &bc, scenario.horizon_s, initial, meta)
}

/// Convenience used by tests and the verification battery: simulate from an
/// explicit initial state under explicit boundary conditions.
pub fn simulate_from(
    network: &Network,
    cfg: &SolverConfig,
    bc: &BoundarySet,
    horizon_s: f64,
    initial: SystemState,
    label: &str,
) -> Result<Trajectory> {
    let grids = discretize(network, cfg.target_dx_m)?;
    let meta = RunMeta {
        scenario: label.to_string(),
        seed: cfg.seed,
        eos: cfg.eos_mode,
        clipped_nodes: vec![],
        insult_time_s: None,
        max_kirchhoff_residual_kg_s: 0.0,
    };
    simulate_boundary(network, &grids, cfg, bc, horizon_s, initial, meta)
}

/// Maximum absolute nodal pressure deviation between two windows of a
/// trajectory offset by `period_s` (used for periodicity checks).
pub fn periodicity_deviation(traj: &Trajectory, from_s: f64, period_s: f64) -> f64 {
    if traj.times_s.len() < 2 {
        return 0.0;
    }
    // Mean spacing is the nominal cadence; individual samples carry
    // nearest-step jitter and must not set the lag.
    let cadence = (traj.times_s.last().unwrap() - traj.times_s[0])
        / (traj.times_s.len() - 1) as f64;
    let lag = (period_s / cadence).round() as usize;
    let mut max_dev: f64 = 0.0;
    for k in 0..traj.n_samples() {
        if traj.times_s[k] < from_s || k < lag {
            continue;
        }
        for n in 0..traj.node_ids.len() {
            let dev = (traj.pressure(k, n) - traj.pressure(k - lag, n)).abs();
            max_dev = max_dev.max(dev);
        }
    }
    max_dev
}
