//! DC network description and its CSV ingestion.
//!
//! File layouts are documented in `docs/network_csv.md`:
//! `nodes.csv` (`id`), `lines.csv` (`from,to,reactance,capacity`) and
//! `units.csv` (see [`UnitRow`]). Node ids in the files are arbitrary
//! integers; they are mapped to dense indices in `nodes.csv` order, and the
//! first node is the angle reference.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::case2::{QuickStartUnit, ThermalUnit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series reactance [p.u. on `base_mva`].
    pub reactance: f64,
    /// Thermal limit [MW], enforced in both directions.
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub node_count: usize,
    #[serde(default)]
    pub lines: Vec<Line>,
    #[serde(default)]
    pub reference_node: usize,
    /// Node of each load `k`.
    pub load_nodes: Vec<usize>,
    #[serde(default = "default_base_mva")]
    pub base_mva: f64,
}

fn default_base_mva() -> f64 {
    100.0
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("{file}: {source}")]
    Csv {
        file: String,
        #[source]
        source: csv::Error,
    },
    #[error("{file}: unknown node id {id}")]
    UnknownNode { file: String, id: i64 },
}

impl NetworkSpec {
    /// A single bus carrying every unit and one load.
    pub fn single_node() -> Self {
        Self { node_count: 1, lines: Vec::new(), reference_node: 0, load_nodes: vec![0], base_mva: default_base_mva() }
    }

    pub fn load_count(&self) -> usize {
        self.load_nodes.len()
    }

    /// Flow on `line` in MW per radian of angle difference.
    pub fn susceptance_mw(&self, line: &Line) -> f64 {
        self.base_mva / line.reactance
    }

    pub fn validate(&self) -> Result<(), NetworkError> {
        let n = self.node_count;
        if n == 0 {
            return Err(NetworkError::Invalid("no nodes".into()));
        }
        if self.reference_node >= n {
            return Err(NetworkError::Invalid(format!("reference node {} out of range", self.reference_node)));
        }
        if !(self.base_mva > 0.0) {
            return Err(NetworkError::Invalid("base_mva must be positive".into()));
        }
        for (k, l) in self.lines.iter().enumerate() {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(NetworkError::Invalid(format!("line {k} has bad endpoints {}-{}", l.from, l.to)));
            }
            if !(l.reactance > 0.0) || !(l.capacity > 0.0) {
                return Err(NetworkError::Invalid(format!("line {k} needs positive reactance and capacity")));
            }
        }
        if let Some(k) = self.load_nodes.iter().position(|&node| node >= n) {
            return Err(NetworkError::Invalid(format!("load {k} sits on unknown node")));
        }
        // Connectivity by BFS from the reference.
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([self.reference_node]);
        seen[self.reference_node] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        if let Some(isolated) = seen.iter().position(|s| !s) {
            return Err(NetworkError::Invalid(format!("node {isolated} is not connected to the reference")));
        }
        Ok(())
    }
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    id: i64,
}

#[derive(Debug, Deserialize)]
struct LineRow {
    from: i64,
    to: i64,
    reactance: f64,
    capacity: f64,
}

/// One row of `units.csv`. `kind` is `thermal` or `quickstart`; columns that
/// do not apply to a kind may be left empty.
#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct UnitRow {
    pub node: i64,
    pub kind: String,
    pub energy_cost: f64,
    #[serde(default)]
    pub up_reserve_cost: Option<f64>,
    #[serde(default)]
    pub down_reserve_cost: Option<f64>,
    #[serde(default)]
    pub startup_cost: Option<f64>,
    #[serde(default)]
    pub shutdown_cost: Option<f64>,
    pub p_min: f64,
    pub p_max: f64,
    #[serde(default)]
    pub up_reserve_limit: Option<f64>,
    #[serde(default)]
    pub down_reserve_limit: Option<f64>,
    #[serde(default)]
    pub min_up: Option<usize>,
    #[serde(default)]
    pub min_down: Option<usize>,
    pub ramp_up: f64,
    pub ramp_down: f64,
    #[serde(default)]
    pub initial_on: Option<u8>,
    #[serde(default)]
    pub initial_output: Option<f64>,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, NetworkError> {
    let file = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|source| NetworkError::Csv { file: file.clone(), source })?;
    reader
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|source| NetworkError::Csv { file, source })
}

/// Network and units read from a directory holding the three CSV files.
#[derive(Debug, Clone)]
pub struct NetworkData {
    pub network: NetworkSpec,
    pub units: Vec<ThermalUnit>,
    pub quickstart: Vec<QuickStartUnit>,
    /// File node id for each dense index.
    pub node_ids: Vec<i64>,
}

/// Reads `nodes.csv`, `lines.csv` and `units.csv` from `dir`. `load_node_ids`
/// lists the file ids of the load buses.
pub fn load_network_dir(dir: &Path, load_node_ids: &[i64]) -> Result<NetworkData, NetworkError> {
    let nodes: Vec<NodeRow> = read_rows(&dir.join("nodes.csv"))?;
    let lines: Vec<LineRow> = read_rows(&dir.join("lines.csv"))?;
    let unit_rows: Vec<UnitRow> = read_rows(&dir.join("units.csv"))?;

    let node_ids: Vec<i64> = nodes.iter().map(|n| n.id).collect();
    let index: HashMap<i64, usize> = node_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let lookup = |file: &str, id: i64| index.get(&id).copied().ok_or(NetworkError::UnknownNode { file: file.into(), id });

    let lines = lines
        .iter()
        .map(|l| {
            Ok(Line { from: lookup("lines.csv", l.from)?, to: lookup("lines.csv", l.to)?, reactance: l.reactance, capacity: l.capacity })
        })
        .collect::<Result<Vec<_>, NetworkError>>()?;
    let load_nodes = load_node_ids.iter().map(|&id| lookup("loads", id)).collect::<Result<Vec<_>, _>>()?;
    let network = NetworkSpec { node_count: node_ids.len(), lines, reference_node: 0, load_nodes, base_mva: default_base_mva() };
    network.validate()?;

    let mut units = Vec::new();
    let mut quickstart = Vec::new();
    for row in unit_rows {
        let node = lookup("units.csv", row.node)?;
        match row.kind.as_str() {
            "thermal" => units.push(ThermalUnit {
                node,
                energy_cost: row.energy_cost,
                up_reserve_cost: row.up_reserve_cost.unwrap_or(0.1 * row.energy_cost),
                down_reserve_cost: row.down_reserve_cost.unwrap_or(0.02 * row.energy_cost),
                startup_cost: row.startup_cost.unwrap_or(0.0),
                shutdown_cost: row.shutdown_cost.unwrap_or(0.0),
                p_min: row.p_min,
                p_max: row.p_max,
                up_reserve_limit: row.up_reserve_limit.unwrap_or(0.4 * row.p_max),
                down_reserve_limit: row.down_reserve_limit.unwrap_or(0.4 * row.p_max),
                min_up: row.min_up.unwrap_or(1),
                min_down: row.min_down.unwrap_or(1),
                ramp_up: row.ramp_up,
                ramp_down: row.ramp_down,
                initial_on: row.initial_on.unwrap_or(1) != 0,
                initial_output: row.initial_output.unwrap_or(row.p_min),
            }),
            "quickstart" => quickstart.push(QuickStartUnit {
                node,
                energy_cost: row.energy_cost,
                startup_cost: row.startup_cost.unwrap_or(0.0),
                shutdown_cost: row.shutdown_cost.unwrap_or(0.0),
                p_min: row.p_min,
                p_max: row.p_max,
                ramp_up: row.ramp_up,
                ramp_down: row.ramp_down,
            }),
            other => return Err(NetworkError::Invalid(format!("units.csv: unknown unit kind `{other}`"))),
        }
    }
    Ok(NetworkData { network, units, quickstart, node_ids })
}
