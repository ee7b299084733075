//! Incremental traffic assignment.
//!
//! Demand is loaded in fractions (40/30/20/10 % by default). Each fraction of
//! every OD pair goes onto the fastest path under the current congested edge
//! times; after each fraction the times are refreshed with the BPR
//! volume-delay function. Shortest-path trees are grown per origin in
//! parallel against a frozen snapshot of times.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{EdgeId, NodeId, RoadNetwork, Route, Router, SearchLimits};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdEntry {
    #[serde(rename = "origin_node")]
    pub origin: NodeId,
    #[serde(rename = "dest_node")]
    pub dest: NodeId,
    #[serde(rename = "cars_per_hour")]
    pub demand: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdMatrix {
    pub window: String,
    pub entries: Vec<OdEntry>,
}

impl OdMatrix {
    pub fn new(window: &str, entries: Vec<OdEntry>) -> Result<Self> {
        if let Some(e) = entries.iter().find(|e| !(e.demand >= 0.0 && e.demand.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "OD pair {} -> {} has invalid demand {}",
                e.origin, e.dest, e.demand
            )));
        }
        Ok(Self { window: window.to_string(), entries })
    }

    /// Reads `origin_node,dest_node,cars_per_hour`.
    pub fn load(path: &Path, window: &str) -> Result<Self> {
        Self::new(window, crate::io::read_csv(path)?)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::csv_writer(path)?;
        for e in &self.entries {
            w.record(e)?;
        }
        w.finish()
    }

    pub fn total_demand(&self) -> f64 {
        self.entries.iter().map(|e| e.demand).sum()
    }

    /// Every demand multiplied by `factor`.
    pub fn peak_scale(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::InvalidInput(format!("peak factor {factor} must be positive")));
        }
        let entries = self.entries.iter().map(|e| OdEntry { demand: e.demand * factor, ..*e }).collect();
        Ok(Self { window: self.window.clone(), entries })
    }
}

/// `t = t0 · (1 + α (v/c)^β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bpr {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Bpr {
    fn default() -> Self {
        Self { alpha: 0.15, beta: 4.0 }
    }
}

impl Bpr {
    pub fn time(&self, free_flow_time: f64, flow: f64, capacity: f64) -> f64 {
        free_flow_time * (1.0 + self.alpha * (flow / capacity).powf(self.beta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignParams {
    pub increments: Vec<f64>,
    pub vdf: Bpr,
}

impl Default for AssignParams {
    fn default() -> Self {
        Self { increments: vec![0.4, 0.3, 0.2, 0.1], vdf: Bpr::default() }
    }
}

impl AssignParams {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.increments.iter().sum();
        if self.increments.is_empty() || self.increments.iter().any(|&f| f <= 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "assignment increments {:?} must be positive and sum to 1",
                self.increments
            )));
        }
        if !(self.vdf.alpha >= 0.0 && self.vdf.beta >= 0.0) {
            return Err(Error::Config("BPR alpha and beta must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeFlow {
    pub edge_id: EdgeId,
    #[serde(rename = "flow_vph")]
    pub flow: f64,
    #[serde(rename = "congested_time_s")]
    pub congested_time: f64,
}

/// Demand routed along one path in one increment.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub origin: NodeId,
    pub dest: NodeId,
    pub increment: usize,
    /// Edge indices into the network.
    pub edges: Vec<usize>,
    pub flow: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub window: String,
    /// One entry per network edge, in network edge order.
    pub flows: Vec<EdgeFlow>,
    pub ledger: Vec<PathRecord>,
    /// Congested edge times after each increment.
    pub history: Vec<Vec<f64>>,
    pub assigned_demand: f64,
    pub dropped_demand: f64,
    pub unreachable_pairs: usize,
}

impl Assignment {
    pub fn congested_times(&self) -> Vec<f64> {
        self.flows.iter().map(|f| f.congested_time).collect()
    }

    /// Writes `edge_id,flow_vph,congested_time_s`.
    pub fn write_flows(&self, path: &Path) -> Result<()> {
        write_flows(path, &self.flows)
    }

    /// Writes the path ledger as `origin,dest,increment,flow_vph,edge_ids` (space-separated ids).
    pub fn write_ledger(&self, path: &Path, network: &RoadNetwork) -> Result<()> {
        let mut w = crate::io::csv_writer(path)?;
        w.row(["origin", "dest", "increment", "flow_vph", "edge_ids"])?;
        for p in &self.ledger {
            let ids: Vec<String> = network.edge_ids(&p.edges).iter().map(|i| i.to_string()).collect();
            w.row([
                p.origin.to_string(),
                p.dest.to_string(),
                p.increment.to_string(),
                p.flow.to_string(),
                ids.join(" "),
            ])?;
        }
        w.finish()
    }
}

pub fn write_flows(path: &Path, flows: &[EdgeFlow]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    for f in flows {
        w.record(f)?;
    }
    w.finish()
}

pub fn read_flows(path: &Path) -> Result<Vec<EdgeFlow>> {
    crate::io::read_csv(path)
}

/// Flows in network edge order; edges missing from `flows` get zero flow and free-flow time.
pub fn align_flows(network: &RoadNetwork, flows: &[EdgeFlow]) -> Result<Vec<EdgeFlow>> {
    let mut out: Vec<EdgeFlow> = network
        .edges()
        .iter()
        .map(|e| EdgeFlow { edge_id: e.id, flow: 0.0, congested_time: e.free_flow_time() })
        .collect();
    for f in flows {
        let i = network
            .edge_idx(f.edge_id)
            .ok_or_else(|| Error::InvalidInput(format!("flow for unknown edge {}", f.edge_id)))?;
        out[i] = *f;
    }
    Ok(out)
}

/// Runs incremental assignment of `od` on `network`.
pub fn ita_assign(network: &RoadNetwork, od: &OdMatrix, params: &AssignParams) -> Result<Assignment> {
    params.validate()?;
    let mut by_origin: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (k, e) in od.entries.iter().enumerate() {
        let o = network
            .node_idx(e.origin)
            .ok_or_else(|| Error::InvalidInput(format!("OD origin {} is not a network node", e.origin)))?;
        let d = network
            .node_idx(e.dest)
            .ok_or_else(|| Error::InvalidInput(format!("OD destination {} is not a network node", e.dest)))?;
        if e.demand > 0.0 {
            by_origin.entry(o).or_default().push((k, d));
        }
    }
    let groups: Vec<(usize, Vec<(usize, usize)>)> = by_origin.into_iter().collect();

    let edges = network.edges();
    let free: Vec<f64> = network.free_flow_times();
    let mut times = free.clone();
    let mut flow = vec![0.0; edges.len()];
    let mut assigned = vec![0.0; od.entries.len()];
    let mut reachable = vec![true; od.entries.len()];
    let mut ledger = Vec::new();
    let mut history = Vec::with_capacity(params.increments.len());
    let last = params.increments.len() - 1;

    for (inc, &frac) in params.increments.iter().enumerate() {
        let snapshot = &times;
        let routes: Vec<Vec<(usize, Option<Route>)>> = groups
            .par_iter()
            .map_init(
                || Router::new(network),
                |router, (o, dests)| {
                    let targets: Vec<usize> = dests.iter().map(|d| d.1).collect();
                    router.run(network, *o, snapshot, &SearchLimits::to_targets(&targets));
                    dests.iter().map(|&(k, d)| (k, router.route_to(network, d))).collect()
                },
            )
            .collect();
        for (k, route) in routes.into_iter().flatten() {
            let e = &od.entries[k];
            let Some(route) = route else {
                reachable[k] = false;
                continue;
            };
            if !reachable[k] {
                continue;
            }
            let amount = if inc == last { e.demand - assigned[k] } else { e.demand * frac };
            assigned[k] += amount;
            for &ei in &route.edges {
                flow[ei] += amount;
            }
            ledger.push(PathRecord { origin: e.origin, dest: e.dest, increment: inc, edges: route.edges, flow: amount });
        }
        for (i, e) in edges.iter().enumerate() {
            times[i] = params.vdf.time(free[i], flow[i], e.capacity);
        }
        history.push(times.clone());
    }

    let mut dropped = 0.0;
    let mut unreachable = 0;
    for (k, e) in od.entries.iter().enumerate() {
        if !reachable[k] && e.demand > 0.0 {
            dropped += e.demand;
            unreachable += 1;
            log::warn!("OD pair {} -> {} unreachable; {} cars/h dropped", e.origin, e.dest, e.demand);
        }
    }
    // A pair found unreachable in a later increment cannot have been reached
    // earlier: reachability does not depend on edge times.
    let assigned_demand = od
        .entries
        .iter()
        .enumerate()
        .filter(|(k, _)| reachable[*k])
        .map(|(k, _)| assigned[k])
        .sum();
    if unreachable > 0 {
        log::warn!("{}: {unreachable} unreachable OD pairs, {dropped} cars/h dropped", od.window);
    }
    let flows = edges
        .iter()
        .enumerate()
        .map(|(i, e)| EdgeFlow { edge_id: e.id, flow: flow[i], congested_time: times[i] })
        .collect();
    Ok(Assignment {
        window: od.window.clone(),
        flows,
        ledger,
        history,
        assigned_demand,
        dropped_demand: dropped,
        unreachable_pairs: unreachable,
    })
}
