//! Explicit conservative staggered-grid integrator.
//!
//! Interior density points and flux points alternate along each pipe
//! (see [`crate::grid`]); the two endpoint densities of every pipe are the
//! nodal densities, so pressure continuity at junctions holds by
//! construction. Each node carries a lumped control volume equal to the sum
//! of the adjacent half-cells, and its density advances from the junction
//! mass balance: V_i drho_i/dt = sum of signed phi*S over incident pipe ends
//! minus the withdrawal d_i(t). Total stored mass therefore changes exactly
//! by the integrated net injection, to round-off.
//!
//! A step is the symmetrized sequence
//!
//! 1. half momentum update (pressure gradient + friction) at the current
//!    densities,
//! 2. full mass update of interior and nodal densities with the boundary
//!    withdrawal evaluated at the half-time,
//! 3. half momentum update at the new densities.
//!
//! The friction term is treated Crank-Nicolson style: the update equation
//! x + a x|x| = y is inverted in closed form,
//! x = sign(y) (-1 + sqrt(1 + 4 a |y|)) / (2 a), with a series expansion for
//! 4 a |y| < 1e-8 to avoid cancellation. The scheme is second order in dx
//! and dt and stable under the CFL bound dt <= cfl * dx / a with
//! a = sqrt(p/rho).

use crate::boundary::BoundarySet;
use crate::error::{Error, Result};
use crate::gas::{EosKernel, EosMode, GasProperties};
use crate::grid::PipeGrid;
use crate::network::Network;
use crate::state::SystemState;

/// Closed-form inversion of x + a*x*|x| = y for a >= 0.
///
/// Rationalized quadratic root sign(y) (-1 + sqrt(1 + 4a|y|)) / (2a)
/// = 2y / (1 + sqrt(1 + 4a|y|)): identical algebraically, but free of the
/// catastrophic cancellation of the raw form for small a|y| and exact in
/// the frictionless limit a = 0.
#[inline]
pub fn friction_invert(a: f64, y: f64) -> f64 {
    2.0 * y / (1.0 + (1.0 + 4.0 * a * y.abs()).sqrt())
}

/// Per-step bookkeeping returned by [`Solver::advance`].
#[derive(Debug, Clone, Copy, Default)]
pub struct StepStats {
    /// Net mass injected through the boundaries during this step [kg].
    pub injected_kg: f64,
    /// Largest junction balance residual of the committed nodal updates
    /// [kg/s]; round-off sized for a correct implementation.
    pub max_kirchhoff_residual_kg_s: f64,
}

pub struct Solver<'a> {
    pub network: &'a Network,
    pub grids: &'a [PipeGrid],
    pub props: GasProperties,
    eos: EosKernel,
    from_idx: Vec<usize>,
    to_idx: Vec<usize>,
    /// lambda / (2 D) per pipe [1/m].
    beta: Vec<f64>,
    area: Vec<f64>,
    inv_dx: Vec<f64>,
    /// Lumped nodal volume: sum of adjacent half-cells [m^3].
    node_volume: Vec<f64>,
    scratch_p: Vec<f64>,
    scratch_node_p: Vec<f64>,
    scratch_inflow: Vec<f64>,
}

impl<'a> Solver<'a> {
    pub fn new(network: &'a Network, grids: &'a [PipeGrid], props: GasProperties) -> Result<Self> {
        if grids.len() != network.pipes.len() {
            return Err(Error::validation(format!(
                "{} grids for {} pipes",
                grids.len(),
                network.pipes.len()
            )));
        }
        let mut from_idx = Vec::with_capacity(network.pipes.len());
        let mut to_idx = Vec::with_capacity(network.pipes.len());
        let mut node_volume = vec![0.0; network.nodes.len()];
        for (pipe, grid) in network.pipes.iter().zip(grids) {
            if pipe.id != grid.pipe_id {
                return Err(Error::validation(format!(
                    "grid order mismatch: pipe {} vs grid {}",
                    pipe.id, grid.pipe_id
                )));
            }
            let f = network
                .node_index(pipe.from)
                .ok_or_else(|| Error::validation(format!("pipe {}: missing node", pipe.id)))?;
            let t = network
                .node_index(pipe.to)
                .ok_or_else(|| Error::validation(format!("pipe {}: missing node", pipe.id)))?;
            from_idx.push(f);
            to_idx.push(t);
            let half_cell = pipe.area_m2() * grid.dx_m * 0.5;
            node_volume[f] += half_cell;
            node_volume[t] += half_cell;
        }
        if let Some(i) = node_volume.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::validation(format!(
                "node {} has no incident pipe",
                network.nodes[i].id
            )));
        }
        let n_nodes = network.nodes.len();
        let max_interior = grids.iter().map(|g| g.n_interior()).max().unwrap_or(0);
        Ok(Solver {
            network,
            grids,
            props,
            eos: EosKernel::new(&props),
            from_idx,
            to_idx,
            beta: network
                .pipes
                .iter()
                .map(|p| p.friction / (2.0 * p.diameter_m))
                .collect(),
            area: network.pipes.iter().map(|p| p.area_m2()).collect(),
            inv_dx: grids.iter().map(|g| 1.0 / g.dx_m).collect(),
            node_volume,
            scratch_p: vec![0.0; max_interior],
            scratch_node_p: vec![0.0; n_nodes],
            scratch_inflow: vec![0.0; n_nodes],
        })
    }

    pub fn eos(&self) -> &EosKernel {
        &self.eos
    }

    pub fn node_volumes(&self) -> &[f64] {
        &self.node_volume
    }

    pub fn areas(&self) -> &[f64] {
        &self.area
    }

    /// dt = cfl * min over pipes of dx / a_max, with a_max the largest
    /// sound speed over that pipe's density points (endpoints included).
    pub fn cfl_dt(&self, state: &SystemState, cfl: f64) -> Result<f64> {
        if !(cfl > 0.0 && cfl < 1.0) {
            return Err(Error::domain(format!("cfl must be in (0, 1), got {cfl}")));
        }
        let mut dt = f64::INFINITY;
        for (pi, grid) in self.grids.iter().enumerate() {
            let field = &state.fields[pi];
            let mut a_max: f64 = 0.0;
            for &rho in field
                .rho
                .iter()
                .chain([&state.node_rho[self.from_idx[pi]], &state.node_rho[self.to_idx[pi]]])
            {
                if !(rho > 0.0) || !rho.is_finite() {
                    return Err(Error::domain(format!(
                        "non-physical density {rho} in pipe {} while computing CFL step",
                        grid.pipe_id
                    )));
                }
                a_max = a_max.max(self.eos.sound_speed(rho));
            }
            dt = dt.min(grid.dx_m / a_max);
        }
        if !dt.is_finite() {
            return Err(Error::domain("non-finite CFL step".to_string()));
        }
        Ok(cfl * dt)
    }

    /// State-independent CFL-safe step: sqrt(RT) bounds the CNGA sound speed
    /// for pressures at or above atmospheric (Z <= 1 there). Used by the
    /// fixed-dt policy so paired runs share identical step grids.
    pub fn conservative_dt(&self, cfl: f64) -> Result<f64> {
        if !(cfl > 0.0 && cfl < 1.0) {
            return Err(Error::domain(format!("cfl must be in (0, 1), got {cfl}")));
        }
        let min_dx = self
            .grids
            .iter()
            .map(|g| g.dx_m)
            .fold(f64::INFINITY, f64::min);
        Ok(cfl * min_dx / self.eos.rt().sqrt())
    }

    /// Advance the state in place by one step of size dt.
    pub fn advance(
        &mut self,
        state: &mut SystemState,
        bc: &BoundarySet,
        dt: f64,
    ) -> Result<StepStats> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::domain(format!("step size must be > 0, got {dt}")));
        }
        let t_half = state.time_s + 0.5 * dt;
        self.kick(state, 0.5 * dt);
        let stats = self.drift(state, bc, dt, t_half)?;
        self.kick(state, 0.5 * dt);
        state.time_s += dt;
        state.check_physical(self.network, self.grids)?;
        Ok(stats)
    }

    /// Functional variant of [`Solver::advance`].
    pub fn step(
        &mut self,
        state: &SystemState,
        bc: &BoundarySet,
        dt: f64,
    ) -> Result<(SystemState, StepStats)> {
        let mut next = state.clone();
        let stats = self.advance(&mut next, bc, dt)?;
        Ok((next, stats))
    }

    /// Momentum half-update: phi += -h * d(p)/dx - friction, with the
    /// Crank-Nicolson friction inversion. Reads densities, writes fluxes.
    fn kick(&mut self, state: &mut SystemState, h: f64) {
        let mut node_p = std::mem::take(&mut self.scratch_node_p);
        let mut p_buf = std::mem::take(&mut self.scratch_p);
        node_p.clear();
        node_p.extend(state.node_rho.iter().map(|&r| self.eos.pressure(r)));

        for (pi, grid) in self.grids.iter().enumerate() {
            let field = &mut state.fields[pi];
            let n_flux = grid.n_flux();
            p_buf.clear();
            p_buf.extend(field.rho.iter().map(|&r| self.eos.pressure(r)));

            let rho_from = state.node_rho[self.from_idx[pi]];
            let rho_to = state.node_rho[self.to_idx[pi]];
            let p_from = node_p[self.from_idx[pi]];
            let p_to = node_p[self.to_idx[pi]];
            let grad_coeff = h * self.inv_dx[pi];
            let beta_h = self.beta[pi] * h;

            for k in 0..n_flux {
                let (rho_l, p_l) = if k == 0 {
                    (rho_from, p_from)
                } else {
                    (field.rho[k - 1], p_buf[k - 1])
                };
                let (rho_r, p_r) = if k + 1 == n_flux {
                    (rho_to, p_to)
                } else {
                    (field.rho[k], p_buf[k])
                };
                let a = beta_h / (rho_l + rho_r);
                let phi = field.phi[k];
                let y = phi - grad_coeff * (p_r - p_l) - a * phi * phi.abs();
                field.phi[k] = friction_invert(a, y);
            }
        }

        self.scratch_node_p = node_p;
        self.scratch_p = p_buf;
    }

    /// Mass update over a full step: interior densities from the flux
    /// divergence, nodal densities from the junction balance with the
    /// withdrawal evaluated at the half-time.
    fn drift(
        &mut self,
        state: &mut SystemState,
        bc: &BoundarySet,
        dt: f64,
        t_half: f64,
    ) -> Result<StepStats> {
        let mut inflow = std::mem::take(&mut self.scratch_inflow);
        inflow.clear();
        inflow.resize(state.node_rho.len(), 0.0);

        for (pi, grid) in self.grids.iter().enumerate() {
            let field = &mut state.fields[pi];
            let n = grid.n_flux();
            inflow[self.from_idx[pi]] -= self.area[pi] * field.phi[0];
            inflow[self.to_idx[pi]] += self.area[pi] * field.phi[n - 1];
            let coeff = dt * self.inv_dx[pi];
            for j in 0..field.rho.len() {
                field.rho[j] += coeff * (field.phi[j] - field.phi[j + 1]);
            }
        }

        let mut injected = 0.0;
        let mut max_residual: f64 = 0.0;
        for (i, node) in self.network.nodes.iter().enumerate() {
            let d = bc.withdrawal(node.id, t_half)?;
            injected -= d;
            let balance = inflow[i] - d;
            let old = state.node_rho[i];
            state.node_rho[i] = old + dt * balance / self.node_volume[i];
            // Residual of the committed update, in kg/s.
            let residual = (self.node_volume[i] * (state.node_rho[i] - old) / dt - balance).abs();
            max_residual = max_residual.max(residual);
        }

        self.scratch_inflow = inflow;
        Ok(StepStats {
            injected_kg: injected * dt,
            max_kirchhoff_residual_kg_s: max_residual,
        })
    }

    /// Per-pipe stored mass (trapezoid rule; endpoint half-cells use the
    /// nodal densities).
    pub fn pipe_masses(&self, state: &SystemState) -> Vec<f64> {
        self.grids
            .iter()
            .enumerate()
            .map(|(pi, grid)| {
                state.pipe_mass(
                    pi,
                    grid,
                    self.area[pi],
                    state.node_rho[self.from_idx[pi]],
                    state.node_rho[self.to_idx[pi]],
                )
            })
            .collect()
    }

    /// Total stored mass, the quantity conserved exactly by the scheme.
    pub fn total_mass(&self, state: &SystemState) -> f64 {
        self.pipe_masses(state).iter().sum()
    }

    pub fn eos_mode(&self) -> EosMode {
        self.props.eos
    }
}
