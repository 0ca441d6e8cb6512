//! Per-pipe staggered grids.
//!
//! A pipe of length L gets `n_cells` uniform intervals of width dx = L /
//! n_cells. Density lives at the interval boundaries: the interior points
//! i*dx (i = 1..n_cells-1) are stored with the pipe, while the two endpoint
//! densities are the nodal densities shared with the junctions. Mass flux
//! lives at the interval midpoints (i + 1/2)*dx, one per interval, so a pipe
//! stores `n_cells - 1` densities and `n_cells` fluxes ("edges = cells + 1"
//! in the dual view). The half-interval volumes adjacent to each endpoint
//! belong to the node's lumped control volume.

use crate::error::{Error, Result};
use crate::network::Network;

#[derive(Debug, Clone)]
pub struct PipeGrid {
    pub pipe_id: u32,
    pub n_cells: usize,
    pub dx_m: f64,
}

impl PipeGrid {
    /// Number of stored interior density points.
    pub fn n_interior(&self) -> usize {
        self.n_cells - 1
    }

    /// Number of flux points.
    pub fn n_flux(&self) -> usize {
        self.n_cells
    }

    /// Positions of the stored density points (cell centers of the density
    /// grid), i*dx for i = 1..n_cells-1.
    pub fn cell_centers(&self) -> Vec<f64> {
        (1..self.n_cells).map(|i| i as f64 * self.dx_m).collect()
    }

    /// Positions of the flux points (cell edges of the density grid),
    /// (i + 1/2)*dx for i = 0..n_cells-1.
    pub fn edges(&self) -> Vec<f64> {
        (0..self.n_cells)
            .map(|i| (i as f64 + 0.5) * self.dx_m)
            .collect()
    }
}

/// Build one grid per pipe: n_cells = max(2, round(L / target_dx)),
/// dx = L / n_cells.
pub fn discretize(network: &Network, target_dx_m: f64) -> Result<Vec<PipeGrid>> {
    if !(target_dx_m > 0.0) || !target_dx_m.is_finite() {
        return Err(Error::domain(format!(
            "target dx must be > 0 m, got {target_dx_m}"
        )));
    }
    Ok(network
        .pipes
        .iter()
        .map(|pipe| {
            let n_cells = ((pipe.length_m / target_dx_m).round() as usize).max(2);
            PipeGrid {
                pipe_id: pipe.id,
                n_cells,
                dx_m: pipe.length_m / n_cells as f64,
            }
        })
        .collect())
}
