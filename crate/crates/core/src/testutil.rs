//! Shared constructors for unit tests.

use crate::gas::{EosMode, GasProperties};
use crate::grid::{discretize, PipeGrid};
use crate::network::{Network, Node, NodeKind, Pipe};

pub fn node(id: u32, kind: NodeKind) -> Node {
    Node {
        id,
        name: format!("n{id}"),
        kind,
        p_min_pa: 40e5,
        p_max_pa: 90e5,
        elevation_m: 0.0,
        max_flow_kg_s: None,
    }
}

/// Supply (1) -> demand (2) through a single 40 km, 600 mm pipe.
pub fn two_node_network(eos: EosMode) -> (Network, GasProperties) {
    let network = Network::new(
        vec![node(1, NodeKind::Supply), node(2, NodeKind::Demand)],
        vec![Pipe {
            id: 1,
            from: 1,
            to: 2,
            length_m: 40_000.0,
            diameter_m: 0.6,
            friction: 0.01,
        }],
        None,
    )
    .unwrap();
    let props = GasProperties::new(0.6, 288.15, 52.0, eos).unwrap();
    (network, props)
}

pub fn uniform_grids(network: &Network, dx: f64) -> Vec<PipeGrid> {
    discretize(network, dx).unwrap()
}
