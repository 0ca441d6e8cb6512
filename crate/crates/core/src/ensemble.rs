//! Monte-Carlo ensembles: replica fan-out, pointwise quantile bands and
//! survival-time statistics.
//!
//! Replica i runs with seed base_seed + i. Replicas execute concurrently
//! with no shared mutable state; the reduction indexes results by replica,
//! so the outcome is independent of worker count and scheduling order.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::discretize;
use crate::metrics::{survival_time, RunMeta, Trajectory};
use crate::network::Network;
use crate::scenario::{compose, Scenario};
use crate::sim::{init_state, simulate_boundary, SolverConfig};
use crate::units::HOUR_S;

/// Linear-interpolation quantile of a sorted slice (the order statistic at
/// rank q*(n-1), interpolated).
pub fn percentile_linear(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    debug_assert!((0.0..=1.0).contains(&q));
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Pointwise quantile band: the median, the middle 25% ([37.5, 62.5]
/// percentiles) and the middle 75% ([12.5, 87.5] percentiles).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Band {
    pub q125: Vec<f64>,
    pub q375: Vec<f64>,
    pub median: Vec<f64>,
    pub q625: Vec<f64>,
    pub q875: Vec<f64>,
}

impl Band {
    fn with_capacity(n: usize) -> Self {
        Band {
            q125: Vec::with_capacity(n),
            q375: Vec::with_capacity(n),
            median: Vec::with_capacity(n),
            q625: Vec::with_capacity(n),
            q875: Vec::with_capacity(n),
        }
    }

    fn push_from(&mut self, values: &mut [f64]) {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        self.q125.push(percentile_linear(values, 0.125));
        self.q375.push(percentile_linear(values, 0.375));
        self.median.push(percentile_linear(values, 0.5));
        self.q625.push(percentile_linear(values, 0.625));
        self.q875.push(percentile_linear(values, 0.875));
    }
}

/// Survival-time statistics over the replicas that crossed, reported in
/// hours to mirror the usual presentation; the full sample list is kept.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct TauStats {
    pub n_replicas: usize,
    pub n_crossed: usize,
    pub mean_h: Option<f64>,
    pub std_h: Option<f64>,
    pub median_h: Option<f64>,
    /// Per replica, in seed order; None = no crossing within the horizon.
    pub samples_h: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EnsembleStats {
    pub scenario: String,
    pub base_seed: u64,
    pub n_replicas: usize,
    /// Nominal sample times (k * cadence); replica samples are nearest-step.
    pub times_s: Vec<f64>,
    pub node_ids: Vec<u32>,
    /// One pressure band per node, aligned with `node_ids`.
    pub pressure_bands: Vec<Band>,
    pub linepack_total_band: Band,
    pub tau: TauStats,
    /// First-crossing node id -> replica count.
    pub crossing_histogram: std::collections::BTreeMap<u32, usize>,
    /// All downward threshold passages summed over replicas and nodes.
    pub total_crossing_events: usize,
    /// Crossing events at or before the insult time, summed over replicas.
    pub pre_insult_crossings: usize,
    pub insult_time_s: Option<f64>,
    pub threshold_pa: f64,
    /// Union of supply nodes clipped at max flow in any replica.
    pub clipped_nodes: Vec<u32>,
}

struct ReplicaOutcome {
    traj: Trajectory,
    tau_s: Option<f64>,
    first_node: Option<u32>,
    crossing_count: usize,
    pre_insult_count: usize,
}

/// Run `n_replicas` simulations with seeds base_seed..base_seed+n-1 and
/// reduce to quantile bands plus survival statistics.
pub fn run_ensemble(
    network: &Network,
    scenario: &Scenario,
    n_replicas: usize,
    base_seed: u64,
    cfg: &SolverConfig,
    threshold_pa: f64,
) -> Result<EnsembleStats> {
    if n_replicas == 0 {
        return Err(Error::validation("ensemble needs n_replicas >= 1"));
    }
    cfg.validate()?;
    let grids = discretize(network, cfg.target_dx_m)?;

    // Shared deterministic initial state from the noise-free base at t = 0.
    let (bc0, _) = compose(network, &scenario.without_noise(), base_seed)?;
    let (initial, _) = init_state(network, &grids, cfg, &bc0)?;
    let insult_time = scenario.first_insult_s();

    let outcomes: Vec<Result<ReplicaOutcome>> = (0..n_replicas)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed + i as u64;
            let (bc, compose_meta) = compose(network, scenario, seed)?;
            let meta = RunMeta {
                scenario: scenario.name.clone(),
                seed,
                eos: cfg.eos_mode,
                clipped_nodes: compose_meta.clipped_nodes,
                insult_time_s: insult_time,
                max_kirchhoff_residual_kg_s: 0.0,
            };
            let traj = simulate_boundary(
                network,
                &grids,
                cfg,
                &bc,
                scenario.horizon_s,
                initial.clone(),
                meta,
            )?;
            let events = crate::metrics::detect_crossings(&traj, threshold_pa)?;
            let (tau_s, first_node) = match insult_time {
                Some(t0) => {
                    let s = survival_time(&traj, t0, threshold_pa)?;
                    (s.tau_s, s.first_node)
                }
                None => (None, None),
            };
            let pre_insult_count = match insult_time {
                Some(t0) => events.iter().filter(|e| e.time_s <= t0).count(),
                None => 0,
            };
            Ok(ReplicaOutcome {
                traj,
                tau_s,
                first_node,
                crossing_count: events.len(),
                pre_insult_count,
            })
        })
        .collect();

    let mut replicas = Vec::with_capacity(n_replicas);
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(o) => replicas.push(o),
            Err(e) => {
                return Err(Error::Internal(format!(
                    "replica {} (seed {}) failed: {e}",
                    i,
                    base_seed + i as u64
                )))
            }
        }
    }

    let n_samples = replicas
        .iter()
        .map(|r| r.traj.n_samples())
        .min()
        .unwrap_or(0);
    let node_ids = replicas[0].traj.node_ids.clone();
    let times_s: Vec<f64> = (0..n_samples)
        .map(|k| k as f64 * cfg.output_cadence_s)
        .collect();

    let mut pressure_bands = Vec::with_capacity(node_ids.len());
    let mut scratch = vec![0.0; n_replicas];
    for n in 0..node_ids.len() {
        let mut band = Band::with_capacity(n_samples);
        for k in 0..n_samples {
            for (i, r) in replicas.iter().enumerate() {
                scratch[i] = r.traj.pressure(k, n);
            }
            band.push_from(&mut scratch);
        }
        pressure_bands.push(band);
    }
    let mut linepack_total_band = Band::with_capacity(n_samples);
    for k in 0..n_samples {
        for (i, r) in replicas.iter().enumerate() {
            scratch[i] = r.traj.linepack_total_kg[k];
        }
        linepack_total_band.push_from(&mut scratch);
    }

    let samples_h: Vec<Option<f64>> = replicas
        .iter()
        .map(|r| r.tau_s.map(|t| t / HOUR_S))
        .collect();
    let crossed: Vec<f64> = samples_h.iter().filter_map(|t| *t).collect();
    let tau = if crossed.is_empty() {
        TauStats {
            n_replicas,
            n_crossed: 0,
            mean_h: None,
            std_h: None,
            median_h: None,
            samples_h,
        }
    } else {
        let mean = crossed.iter().sum::<f64>() / crossed.len() as f64;
        let std = if crossed.len() > 1 {
            (crossed.iter().map(|t| (t - mean).powi(2)).sum::<f64>()
                / (crossed.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        let mut sorted = crossed.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        TauStats {
            n_replicas,
            n_crossed: crossed.len(),
            mean_h: Some(mean),
            std_h: Some(std),
            median_h: Some(percentile_linear(&sorted, 0.5)),
            samples_h,
        }
    };

    let mut crossing_histogram = std::collections::BTreeMap::new();
    for r in &replicas {
        if let Some(node) = r.first_node {
            *crossing_histogram.entry(node).or_insert(0) += 1;
        }
    }
    let mut clipped: Vec<u32> = replicas
        .iter()
        .flat_map(|r| r.traj.meta.clipped_nodes.iter().copied())
        .collect();
    clipped.sort_unstable();
    clipped.dedup();

    Ok(EnsembleStats {
        scenario: scenario.name.clone(),
        base_seed,
        n_replicas,
        times_s,
        node_ids,
        pressure_bands,
        linepack_total_band,
        tau,
        crossing_histogram,
        total_crossing_events: replicas.iter().map(|r| r.crossing_count).sum(),
        pre_insult_crossings: replicas.iter().map(|r| r.pre_insult_count).sum(),
        insult_time_s: insult_time,
        threshold_pa,
        clipped_nodes: clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn percentile_matches_hand_computed_values() {
        let data = [1.0, 2.0, 3.0, 4.0];
        // h = q (n-1): 0.125 * 3 = 0.375 -> 1 + 0.375.
        assert_relative_eq!(percentile_linear(&data, 0.125), 1.375);
        assert_relative_eq!(percentile_linear(&data, 0.5), 2.5);
        assert_relative_eq!(percentile_linear(&data, 0.875), 3.625);
        assert_relative_eq!(percentile_linear(&data, 0.0), 1.0);
        assert_relative_eq!(percentile_linear(&data, 1.0), 4.0);
        assert_relative_eq!(percentile_linear(&[7.0], 0.3), 7.0);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn quantiles_are_ordered(values in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
                let mut sorted = values;
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let q = [0.125, 0.375, 0.5, 0.625, 0.875]
                    .map(|q| percentile_linear(&sorted, q));
                for w in q.windows(2) {
                    prop_assert!(w[0] <= w[1] + 1e-12);
                }
                prop_assert!(q[0] >= sorted[0] - 1e-12);
                prop_assert!(q[4] <= sorted[sorted.len() - 1] + 1e-12);
            }
        }
    }
}
