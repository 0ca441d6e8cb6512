//! Network topology: nodes, pipes, validation, and the JSON loader.
//!
//! The network is a directed multigraph (parallel pipes between the same
//! node pair are allowed). All boundary conditions in this system are on
//! flux, at supply and demand nodes alike.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::{EosMode, GasProperties};
use crate::units::BAR_PA;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Supply,
    Demand,
    Junction,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: u32,
    pub name: String,
    pub kind: NodeKind,
    pub p_min_pa: f64,
    pub p_max_pa: f64,
    /// Stored for completeness; the dynamics ignore elevation.
    pub elevation_m: f64,
    /// Hard cap for supply-step controls [kg/s]; only meaningful on supplies.
    pub max_flow_kg_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Pipe {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub length_m: f64,
    pub diameter_m: f64,
    /// Darcy-Weisbach friction factor (dimensionless).
    pub friction: f64,
}

impl Pipe {
    /// Cross-section S = pi D^2 / 4, derived exactly.
    pub fn area_m2(&self) -> f64 {
        0.25 * PI * self.diameter_m * self.diameter_m
    }
}

/// Gas constants declared in the network file (all optional).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GasDecl {
    pub gravity: Option<f64>,
    pub temperature_k: Option<f64>,
    pub energy_density_mj_per_kg: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub pipes: Vec<Pipe>,
    pub gas: Option<GasDecl>,
    node_pos: BTreeMap<u32, usize>,
}

impl Network {
    pub fn new(nodes: Vec<Node>, pipes: Vec<Pipe>, gas: Option<GasDecl>) -> Result<Self> {
        let mut node_pos = BTreeMap::new();
        let mut problems = Vec::new();
        for (i, node) in nodes.iter().enumerate() {
            if node_pos.insert(node.id, i).is_some() {
                problems.push(format!("duplicate node id {}", node.id));
            }
            if !(node.p_min_pa > 0.0 && node.p_min_pa < node.p_max_pa) {
                problems.push(format!(
                    "node {}: pressure limits must satisfy 0 < p_min < p_max (got {} / {})",
                    node.id, node.p_min_pa, node.p_max_pa
                ));
            }
        }
        let mut pipe_ids = BTreeMap::new();
        for pipe in &pipes {
            if pipe_ids.insert(pipe.id, ()).is_some() {
                problems.push(format!("duplicate pipe id {}", pipe.id));
            }
            for end in [pipe.from, pipe.to] {
                if !node_pos.contains_key(&end) {
                    problems.push(format!(
                        "pipe {} references missing node {}",
                        pipe.id, end
                    ));
                }
            }
            if !(pipe.length_m > 0.0) {
                problems.push(format!("pipe {}: length must be > 0", pipe.id));
            }
            if !(pipe.diameter_m > 0.0) {
                problems.push(format!("pipe {}: diameter must be > 0", pipe.id));
            }
            if !(pipe.friction > 0.0) {
                problems.push(format!("pipe {}: friction factor must be > 0", pipe.id));
            }
        }
        if !nodes.iter().any(|n| n.kind == NodeKind::Supply) {
            problems.push("network has no supply node".to_string());
        }
        if problems.is_empty() {
            // Connectivity via union-find over node indices.
            let mut parent: Vec<usize> = (0..nodes.len()).collect();
            fn find(parent: &mut Vec<usize>, mut x: usize) -> usize {
                while parent[x] != x {
                    parent[x] = parent[parent[x]];
                    x = parent[x];
                }
                x
            }
            for pipe in &pipes {
                let a = find(&mut parent, node_pos[&pipe.from]);
                let b = find(&mut parent, node_pos[&pipe.to]);
                parent[a] = b;
            }
            let root = find(&mut parent, 0);
            for i in 1..nodes.len() {
                if find(&mut parent, i) != root {
                    problems.push(format!(
                        "network is not connected: node {} is unreachable",
                        nodes[i].id
                    ));
                    break;
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems.join("; ")));
        }
        Ok(Network {
            nodes,
            pipes,
            gas,
            node_pos,
        })
    }

    pub fn node_index(&self, id: u32) -> Option<usize> {
        self.node_pos.get(&id).copied()
    }

    pub fn node(&self, id: u32) -> Option<&Node> {
        self.node_index(id).map(|i| &self.nodes[i])
    }

    pub fn require_node(&self, id: u32) -> Result<&Node> {
        self.node(id)
            .ok_or_else(|| Error::validation(format!("unknown node id {id}")))
    }

    pub fn supply_ids(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Supply)
            .map(|n| n.id)
            .collect()
    }

    pub fn demand_ids(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Demand)
            .map(|n| n.id)
            .collect()
    }

    /// Gas properties resolved from the file declaration (if any) plus the
    /// requested equation-of-state mode.
    pub fn gas_properties(&self, eos: EosMode) -> Result<GasProperties> {
        let decl = self.gas.unwrap_or(GasDecl {
            gravity: None,
            temperature_k: None,
            energy_density_mj_per_kg: None,
        });
        GasProperties::new(
            decl.gravity.unwrap_or(0.6),
            decl.temperature_k.unwrap_or(288.15),
            decl.energy_density_mj_per_kg.unwrap_or(52.0),
            eos,
        )
    }
}

// ---------------------------------------------------------------------------
// File format

#[derive(Debug, Deserialize)]
struct UnitsDecl {
    #[serde(default)]
    length: Option<String>,
    #[serde(default)]
    diameter: Option<String>,
    #[serde(default)]
    pressure: Option<String>,
}

#[derive(Debug, Deserialize)]
struct NodeDecl {
    id: u32,
    #[serde(default)]
    name: Option<String>,
    kind: NodeKind,
    p_min: f64,
    p_max: f64,
    #[serde(default)]
    elevation_m: f64,
    #[serde(default)]
    max_flow_kg_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct PipeDecl {
    id: u32,
    from: u32,
    to: u32,
    length: f64,
    diameter: f64,
    #[serde(default)]
    friction: Option<f64>,
}

#[derive(Debug, Deserialize)]
struct NetworkFile {
    #[serde(default)]
    units: Option<UnitsDecl>,
    #[serde(default)]
    gas: Option<GasDecl>,
    nodes: Vec<NodeDecl>,
    pipes: Vec<PipeDecl>,
}

const DEFAULT_FRICTION: f64 = 0.01;

fn length_scale(unit: Option<&str>, what: &str) -> Result<f64> {
    match unit.unwrap_or("m") {
        "m" => Ok(1.0),
        "km" => Ok(1000.0),
        "mm" => Ok(0.001),
        other => Err(Error::Parse(format!("unsupported {what} unit {other:?}"))),
    }
}

fn pressure_scale(unit: Option<&str>) -> Result<f64> {
    match unit.unwrap_or("bar") {
        "Pa" | "pa" => Ok(1.0),
        "bar" => Ok(BAR_PA),
        other => Err(Error::Parse(format!("unsupported pressure unit {other:?}"))),
    }
}

/// Load and validate a network from a JSON file. Lengths/diameters/pressures
/// are converted to SI according to the in-file `units` declaration
/// (defaults: m / m / bar).
pub fn load_network(path: impl AsRef<Path>) -> Result<Network> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let file: NetworkFile = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    network_from_file(file)
}

fn network_from_file(file: NetworkFile) -> Result<Network> {
    let units = file.units.unwrap_or(UnitsDecl {
        length: None,
        diameter: None,
        pressure: None,
    });
    let len_scale = length_scale(units.length.as_deref(), "length")?;
    let dia_scale = length_scale(units.diameter.as_deref(), "diameter")?;
    let p_scale = pressure_scale(units.pressure.as_deref())?;

    let nodes = file
        .nodes
        .into_iter()
        .map(|n| Node {
            id: n.id,
            name: n.name.unwrap_or_else(|| format!("n{:02}", n.id)),
            kind: n.kind,
            p_min_pa: n.p_min * p_scale,
            p_max_pa: n.p_max * p_scale,
            elevation_m: n.elevation_m,
            max_flow_kg_s: n.max_flow_kg_s,
        })
        .collect();
    let pipes = file
        .pipes
        .into_iter()
        .map(|p| Pipe {
            id: p.id,
            from: p.from,
            to: p.to,
            length_m: p.length * len_scale,
            diameter_m: p.diameter * dia_scale,
            friction: p.friction.unwrap_or(DEFAULT_FRICTION),
        })
        .collect();
    Network::new(nodes, pipes, file.gas)
}
