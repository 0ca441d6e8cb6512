//! Discrete system state: per-pipe fields plus nodal densities.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::EosKernel;
use crate::grid::PipeGrid;
use crate::network::Network;

/// Discretized fields of one pipe: interior densities at the stored density
/// points and mass flux at the staggered flux points (`phi.len() ==
/// rho.len() + 1`). The endpoint densities are the nodal densities held in
/// [`SystemState::node_rho`]; pressure continuity at junctions is structural.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipeField {
    /// Density at interior points [kg/m^3].
    pub rho: Vec<f64>,
    /// Mass flux at flux points [kg/(m^2 s)], positive from `from` to `to`.
    pub phi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub time_s: f64,
    /// One field per pipe, aligned with `Network::pipes`.
    pub fields: Vec<PipeField>,
    /// One density per node, aligned with `Network::nodes`.
    pub node_rho: Vec<f64>,
}

impl SystemState {
    /// Spatially uniform state at rest.
    pub fn uniform(network: &Network, grids: &[PipeGrid], rho: f64) -> Self {
        SystemState {
            time_s: 0.0,
            fields: grids
                .iter()
                .map(|g| PipeField {
                    rho: vec![rho; g.n_interior()],
                    phi: vec![0.0; g.n_flux()],
                })
                .collect(),
            node_rho: vec![rho; network.nodes.len()],
        }
    }

    pub fn validate_shape(&self, network: &Network, grids: &[PipeGrid]) -> Result<()> {
        if self.fields.len() != grids.len() {
            return Err(Error::validation(format!(
                "state has {} pipe fields, grid set has {}",
                self.fields.len(),
                grids.len()
            )));
        }
        if self.node_rho.len() != network.nodes.len() {
            return Err(Error::validation(format!(
                "state has {} nodal densities, network has {} nodes",
                self.node_rho.len(),
                network.nodes.len()
            )));
        }
        for (field, grid) in self.fields.iter().zip(grids) {
            if field.rho.len() != grid.n_interior() || field.phi.len() != grid.n_flux() {
                return Err(Error::validation(format!(
                    "pipe {}: field sizes ({} rho, {} phi) do not match grid ({} cells)",
                    grid.pipe_id,
                    field.rho.len(),
                    field.phi.len(),
                    grid.n_cells
                )));
            }
        }
        Ok(())
    }

    /// All densities finite and positive, fluxes finite; returns the first
    /// offending location otherwise.
    pub fn check_physical(&self, network: &Network, grids: &[PipeGrid]) -> Result<()> {
        for (i, rho) in self.node_rho.iter().enumerate() {
            if !rho.is_finite() || *rho <= 0.0 {
                return Err(Error::Instability {
                    time_s: self.time_s,
                    location: format!("node {}", network.nodes[i].id),
                    what: format!("density {rho}"),
                });
            }
        }
        for (field, grid) in self.fields.iter().zip(grids) {
            if let Some(rho) = field.rho.iter().find(|r| !r.is_finite() || **r <= 0.0) {
                return Err(Error::Instability {
                    time_s: self.time_s,
                    location: format!("pipe {}", grid.pipe_id),
                    what: format!("density {rho}"),
                });
            }
            if let Some(phi) = field.phi.iter().find(|p| !p.is_finite()) {
                return Err(Error::Instability {
                    time_s: self.time_s,
                    location: format!("pipe {}", grid.pipe_id),
                    what: format!("flux {phi}"),
                });
            }
        }
        Ok(())
    }

    /// Nodal pressures in network node order.
    pub fn node_pressures(&self, eos: &EosKernel) -> Vec<f64> {
        self.node_rho.iter().map(|&r| eos.pressure(r)).collect()
    }

    /// Stored mass of one pipe by the trapezoid rule: interior points carry
    /// a full dx of volume, the nodal endpoints half a dx each, so a uniform
    /// density gives exactly rho * S * L.
    pub fn pipe_mass(
        &self,
        pipe_idx: usize,
        grid: &PipeGrid,
        area_m2: f64,
        rho_from: f64,
        rho_to: f64,
    ) -> f64 {
        let interior: f64 = self.fields[pipe_idx].rho.iter().sum();
        area_m2 * grid.dx_m * (interior + 0.5 * (rho_from + rho_to))
    }
}
