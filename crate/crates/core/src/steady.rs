//! Steady-state initialization.
//!
//! Two stages: an algebraic solve (Newton on nodal pressure potentials with
//! the per-pipe steady friction relation) followed by time-march relaxation
//! with frozen boundaries until the linepack drift criterion holds.
//!
//! In steady isothermal flow the momentum balance integrates to
//! G(p_in) - G(p_out) = (lambda L / 2D) * phi |phi| with G the density
//! antiderivative of the equation of state, so per-pipe fluxes are explicit
//! in the endpoint potentials and the unknowns reduce to one potential per
//! node (one supply node pinned to the reference pressure).

use crate::boundary::BoundarySet;
use crate::error::{Error, Result};
use crate::gas::{EosKernel, GasProperties};
use crate::grid::PipeGrid;
use crate::network::Network;
use crate::solver::Solver;
use crate::state::{PipeField, SystemState};
use crate::units::HOUR_S;

/// Relative supply/demand balance tolerance for initialization.
pub const BALANCE_TOLERANCE: f64 = 1e-9;

const NEWTON_MAX_ITER: usize = 200;
const NEWTON_TOLERANCE: f64 = 1e-10;
/// Flux floor regularizing the Jacobian near phi = 0 [kg/(m^2 s)].
const PHI_FLOOR: f64 = 1e-6;

/// Dense Gaussian elimination with partial pivoting; the steady systems are
/// a handful of unknowns, so no factorization library is warranted.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::Convergence(
                "singular Jacobian in steady solve".to_string(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

struct SteadyNetworkSolution {
    /// Nodal pressure potential G(p), network node order.
    potential: Vec<f64>,
    /// Per-pipe steady flux [kg/(m^2 s)], positive from->to.
    phi: Vec<f64>,
}

/// Newton solve of the nodal balance sum(signed S phi) + q = 0 with
/// phi = sign(du) sqrt(2D/(lambda L) |du|).
fn solve_steady_network(
    network: &Network,
    eos: &EosKernel,
    injections: &[f64],
    ref_idx: usize,
    ref_pressure_pa: f64,
) -> Result<SteadyNetworkSolution> {
    let n = network.nodes.len();
    let u_ref = eos.pressure_potential(ref_pressure_pa);
    let k_pipe: Vec<f64> = network
        .pipes
        .iter()
        .map(|p| 2.0 * p.diameter_m / (p.friction * p.length_m))
        .collect();
    let ends: Vec<(usize, usize)> = network
        .pipes
        .iter()
        .map(|p| {
            (
                network.node_index(p.from).unwrap(),
                network.node_index(p.to).unwrap(),
            )
        })
        .collect();
    let areas: Vec<f64> = network.pipes.iter().map(|p| p.area_m2()).collect();

    // Unknown layout: all node indices except the reference.
    let free: Vec<usize> = (0..n).filter(|&i| i != ref_idx).collect();
    let pos_of: Vec<Option<usize>> = {
        let mut v = vec![None; n];
        for (k, &i) in free.iter().enumerate() {
            v[i] = Some(k);
        }
        v
    };

    let q_scale = injections.iter().map(|q| q.abs()).sum::<f64>().max(1.0);

    // Initial guess: linearized resistive network around a 5% potential drop.
    let mut u = vec![u_ref; n];
    {
        let du_scale = (0.05 * u_ref).max(1e-12);
        let mut a = vec![vec![0.0; free.len()]; free.len()];
        let mut b = vec![0.0; free.len()];
        for (k, &i) in free.iter().enumerate() {
            b[k] = injections[i];
        }
        for (pi, &(f, t)) in ends.iter().enumerate() {
            let g = areas[pi] * (k_pipe[pi] * du_scale).sqrt() / du_scale;
            for (me, other) in [(f, t), (t, f)] {
                if let Some(row) = pos_of[me] {
                    a[row][row] += g;
                    if let Some(col) = pos_of[other] {
                        a[row][col] -= g;
                    }
                }
            }
        }
        if !free.is_empty() {
            let du = solve_dense(a, b)?;
            for (k, &i) in free.iter().enumerate() {
                u[i] = u_ref + du[k];
            }
        }
    }

    let pipe_flux = |u: &[f64], pi: usize| -> f64 {
        let (f, t) = ends[pi];
        let du = u[f] - u[t];
        du.signum() * (k_pipe[pi] * du.abs()).sqrt()
    };
    let residual = |u: &[f64]| -> Vec<f64> {
        let mut r = vec![0.0; free.len()];
        for (k, &i) in free.iter().enumerate() {
            r[k] = injections[i];
        }
        for (pi, &(f, t)) in ends.iter().enumerate() {
            let m = areas[pi] * pipe_flux(u, pi);
            if let Some(row) = pos_of[f] {
                r[row] -= m;
            }
            if let Some(row) = pos_of[t] {
                r[row] += m;
            }
        }
        r
    };
    let norm = |r: &[f64]| r.iter().map(|x| x.abs()).fold(0.0f64, f64::max);

    let mut r = residual(&u);
    for _ in 0..NEWTON_MAX_ITER {
        if norm(&r) <= NEWTON_TOLERANCE * q_scale {
            let phi = (0..network.pipes.len()).map(|pi| pipe_flux(&u, pi)).collect();
            return Ok(SteadyNetworkSolution { potential: u, phi });
        }
        // Jacobian of the nodal balances w.r.t. free potentials.
        let mut jac = vec![vec![0.0; free.len()]; free.len()];
        for (pi, &(f, t)) in ends.iter().enumerate() {
            let phi = pipe_flux(&u, pi);
            let w = areas[pi] * k_pipe[pi] / (2.0 * phi.abs().max(PHI_FLOOR));
            // d(balance_f)/du_f = -w, d(balance_f)/du_t = +w, mirrored for t.
            if let Some(row) = pos_of[f] {
                jac[row][row] -= w;
                if let Some(col) = pos_of[t] {
                    jac[row][col] += w;
                }
            }
            if let Some(row) = pos_of[t] {
                jac[row][row] -= w;
                if let Some(col) = pos_of[f] {
                    jac[row][col] += w;
                }
            }
        }
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = solve_dense(jac, rhs)?;

        // Damped update with backtracking.
        let mut lambda = 1.0;
        let base = norm(&r);
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            for (k, &i) in free.iter().enumerate() {
                trial[i] += lambda * delta[k];
            }
            let r_trial = residual(&trial);
            if norm(&r_trial) < base || lambda < 1e-8 {
                u = trial;
                r = r_trial;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(&r) <= 1e-6 * q_scale {
        // Accept a slightly loose solve; relaxation tightens it.
        let phi = (0..network.pipes.len()).map(|pi| pipe_flux(&u, pi)).collect();
        return Ok(SteadyNetworkSolution { potential: u, phi });
    }
    Err(Error::Convergence(format!(
        "steady network solve stalled with max nodal imbalance {:.3e} kg/s (scale {:.3e})",
        norm(&r),
        q_scale
    )))
}

/// Diagnostics from [`steady_state_init`].
#[derive(Debug, Clone)]
pub struct SteadyReport {
    /// Linepack drift of the last relaxation block, relative per hour.
    pub drift_per_hour: f64,
    pub relax_hours: f64,
    pub newton_pressures_pa: Vec<f64>,
}

/// Build a steady initial state for the given injections (kg/s, positive
/// into the network; one entry per node id, missing = 0).
///
/// `ref_node` is pinned to `ref_pressure_pa`. The returned state has
/// relative linepack drift below `drift_tol_per_hour` when stepped with the
/// same frozen boundaries.
pub fn steady_state_init(
    network: &Network,
    grids: &[PipeGrid],
    props: GasProperties,
    injections_by_node: &[(u32, f64)],
    ref_node: u32,
    ref_pressure_pa: f64,
    cfl: f64,
    drift_tol_per_hour: f64,
    max_relax_hours: f64,
) -> Result<(SystemState, SteadyReport)> {
    let ref_idx = network
        .node_index(ref_node)
        .ok_or_else(|| Error::validation(format!("reference node {ref_node} not in network")))?;
    if !(ref_pressure_pa > 0.0) {
        return Err(Error::domain(format!(
            "reference pressure must be > 0, got {ref_pressure_pa}"
        )));
    }

    let mut injections = vec![0.0; network.nodes.len()];
    for &(id, q) in injections_by_node {
        let idx = network
            .node_index(id)
            .ok_or_else(|| Error::validation(format!("injection at unknown node {id}")))?;
        injections[idx] += q;
    }
    let gross: f64 = injections.iter().map(|q| q.abs()).sum();
    let net: f64 = injections.iter().sum();
    if gross > 0.0 && net.abs() > BALANCE_TOLERANCE * gross {
        return Err(Error::validation(format!(
            "supplies and demands are unbalanced: net {net:.6e} kg/s against gross {gross:.6e} kg/s"
        )));
    }

    let eos = EosKernel::new(&props);

    // All-quiet case: uniform density at the reference pressure, zero flux.
    let state = if gross == 0.0 {
        let rho = eos.density(ref_pressure_pa);
        SystemState::uniform(network, grids, rho)
    } else {
        let solution = solve_steady_network(network, &eos, &injections, ref_idx, ref_pressure_pa)?;
        let shift = eos.pressure_potential(ref_pressure_pa) - solution.potential[ref_idx];
        let node_potential: Vec<f64> = solution.potential.iter().map(|u| u + shift).collect();
        let node_rho: Vec<f64> = node_potential
            .iter()
            .map(|&u| eos.density(eos.pressure_from_potential(u)))
            .collect();

        let mut fields = Vec::with_capacity(network.pipes.len());
        for (pi, (pipe, grid)) in network.pipes.iter().zip(grids).enumerate() {
            let f_idx = network.node_index(pipe.from).unwrap();
            let phi = solution.phi[pi];
            let slope = pipe.friction / (2.0 * pipe.diameter_m) * phi * phi.abs();
            let u_from = node_potential[f_idx];
            let rho: Vec<f64> = (1..grid.n_cells)
                .map(|i| {
                    let x = i as f64 * grid.dx_m;
                    eos.density(eos.pressure_from_potential(u_from - slope * x))
                })
                .collect();
            fields.push(PipeField {
                rho,
                phi: vec![phi; grid.n_flux()],
            });
        }
        SystemState {
            time_s: 0.0,
            fields,
            node_rho,
        }
    };

    let newton_pressures = state.node_pressures(&eos);
    state.check_physical(network, grids).map_err(|_| {
        Error::Convergence(
            "steady solve produced non-physical densities; check loads against pipe capacity"
                .to_string(),
        )
    })?;

    // Stage (b): relax under frozen boundaries until the drift criterion.
    let mut bc = BoundarySet::new();
    for (i, node) in network.nodes.iter().enumerate() {
        bc.insert_withdrawal(crate::boundary::Profile::constant(node.id, -injections[i]));
    }
    let mut state = state;
    let mut relax_hours = 0.0;
    let mut drift = f64::INFINITY;
    let mut solver = Solver::new(network, grids, props)?;
    while relax_hours < max_relax_hours {
        let m0 = solver.total_mass(&state);
        let mut t_block = 0.0;
        while t_block < HOUR_S {
            let dt = solver.cfl_dt(&state, cfl)?.min(HOUR_S - t_block);
            solver.advance(&mut state, &bc, dt)?;
            t_block += dt;
        }
        relax_hours += 1.0;
        let m1 = solver.total_mass(&state);
        drift = ((m1 - m0) / m0).abs();
        if drift < drift_tol_per_hour {
            state.time_s = 0.0;
            return Ok((
                state,
                SteadyReport {
                    drift_per_hour: drift,
                    relax_hours,
                    newton_pressures_pa: newton_pressures,
                },
            ));
        }
    }
    Err(Error::Convergence(format!(
        "steady relaxation did not meet drift tolerance {drift_tol_per_hour:.1e}/h within \
         {max_relax_hours} h (last drift {drift:.3e}/h)"
    )))
}
