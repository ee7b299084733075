//! Directed road graph: loading, densification, spatial lookup and routing.
//!
//! Nodes and edges are stored sorted by id, so internal indices follow id
//! order. Routing tie-breaks compare index sequences, which is therefore the
//! same as comparing edge-id sequences.

mod routing;
mod spatial;

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::geo::{interpolate, LatLon};

pub use routing::{Route, Router, SearchLimits};
pub use spatial::GridIndex;

pub type NodeId = u64;
pub type EdgeId = u64;

/// Default maximum spacing between consecutive nodes after densification.
pub const DEFAULT_MAX_SPACING_M: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub position: LatLon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub from: NodeId,
    pub to: NodeId,
    /// Meters.
    pub length: f64,
    /// m/s.
    pub free_flow_speed: f64,
    /// Vehicles per hour.
    pub capacity: f64,
    /// Edge this one was cut from by [`RoadNetwork::densify`]; its own id otherwise.
    pub parent: EdgeId,
}

impl Edge {
    /// Seconds at free-flow speed.
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.free_flow_speed
    }
}

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    node_index: HashMap<NodeId, usize>,
    edge_index: HashMap<EdgeId, usize>,
    // CSR adjacency over edge indices
    out_offsets: Vec<usize>,
    out_edges: Vec<usize>,
    edge_from: Vec<usize>,
    edge_to: Vec<usize>,
    spatial: GridIndex,
}

#[derive(Debug, Deserialize)]
struct NodeRow {
    node_id: NodeId,
    lat: f64,
    lon: f64,
}

#[derive(Debug, Deserialize)]
struct EdgeRow {
    edge_id: EdgeId,
    from_node: NodeId,
    to_node: NodeId,
    length_m: f64,
    free_flow_speed_ms: f64,
    capacity_vph: f64,
}

impl PartialEq for RoadNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes && self.edges == other.edges
    }
}

impl RoadNetwork {
    /// Builds a network, validating every invariant.
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self> {
        let mut nodes = nodes;
        let mut edges = edges;
        nodes.sort_by_key(|n| n.id);
        edges.sort_by_key(|e| e.id);

        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !n.position.is_valid() {
                return Err(Error::InvalidNetwork(format!(
                    "node {} has out-of-range position ({}, {})",
                    n.id, n.position.lat, n.position.lon
                )));
            }
            if node_index.insert(n.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate node id {}", n.id)));
            }
        }

        let mut edge_index = HashMap::with_capacity(edges.len());
        let mut edge_from = Vec::with_capacity(edges.len());
        let mut edge_to = Vec::with_capacity(edges.len());
        for (i, e) in edges.iter().enumerate() {
            if edge_index.insert(e.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate edge id {}", e.id)));
            }
            let from = *node_index
                .get(&e.from)
                .ok_or(Error::DanglingEdge { edge: e.id, node: e.from })?;
            let to = *node_index
                .get(&e.to)
                .ok_or(Error::DanglingEdge { edge: e.id, node: e.to })?;
            if from == to {
                return Err(Error::InvalidNetwork(format!("edge {} is a self-loop", e.id)));
            }
            for (name, v) in [
                ("length", e.length),
                ("free-flow speed", e.free_flow_speed),
                ("capacity", e.capacity),
            ] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::InvalidNetwork(format!(
                        "edge {} has non-positive {name} {v}",
                        e.id
                    )));
                }
            }
            edge_from.push(from);
            edge_to.push(to);
        }

        let mut out_offsets = vec![0usize; nodes.len() + 1];
        for &f in &edge_from {
            out_offsets[f + 1] += 1;
        }
        for i in 0..nodes.len() {
            out_offsets[i + 1] += out_offsets[i];
        }
        let mut fill = out_offsets.clone();
        let mut out_edges = vec![0usize; edges.len()];
        // edges are visited in id order, so each adjacency list is id-sorted
        for (ei, &f) in edge_from.iter().enumerate() {
            out_edges[fill[f]] = ei;
            fill[f] += 1;
        }

        let spatial = GridIndex::build(nodes.iter().map(|n| n.position), spatial::DEFAULT_CELL_M);

        let network = Self {
            nodes,
            edges,
            node_index,
            edge_index,
            out_offsets,
            out_edges,
            edge_from,
            edge_to,
            spatial,
        };
        if !network.is_weakly_connected() {
            log::warn!(
                "road network with {} nodes and {} edges is not weakly connected",
                network.nodes.len(),
                network.edges.len()
            );
        }
        Ok(network)
    }

    /// Loads `node_id,lat,lon` and
    /// `edge_id,from_node,to_node,length_m,free_flow_speed_ms,capacity_vph` CSV files.
    pub fn load(nodes_file: &Path, edges_file: &Path) -> Result<Self> {
        let nodes = read_rows::<NodeRow>(nodes_file)?
            .into_iter()
            .map(|(line, r)| {
                let position = LatLon::new(r.lat, r.lon);
                if !position.is_valid() {
                    return Err(Error::malformed(nodes_file, line, "coordinates out of range"));
                }
                Ok(Node { id: r.node_id, position })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = read_rows::<EdgeRow>(edges_file)?
            .into_iter()
            .map(|(line, r)| {
                if !(r.length_m > 0.0 && r.free_flow_speed_ms > 0.0 && r.capacity_vph > 0.0) {
                    return Err(Error::malformed(
                        edges_file,
                        line,
                        format!("edge {} must have positive length, speed and capacity", r.edge_id),
                    ));
                }
                Ok(Edge {
                    id: r.edge_id,
                    from: r.from_node,
                    to: r.to_node,
                    length: r.length_m,
                    free_flow_speed: r.free_flow_speed_ms,
                    capacity: r.capacity_vph,
                    parent: r.edge_id,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(nodes, edges)
    }

    /// Writes the network back out in the loader's CSV layout.
    pub fn write_csv(&self, nodes_file: &Path, edges_file: &Path) -> Result<()> {
        let mut w = crate::io::csv_writer(nodes_file)?;
        w.row(["node_id", "lat", "lon"])?;
        for n in &self.nodes {
            w.row([n.id.to_string(), n.position.lat.to_string(), n.position.lon.to_string()])?;
        }
        w.finish()?;
        let mut w = crate::io::csv_writer(edges_file)?;
        w.row(["edge_id", "from_node", "to_node", "length_m", "free_flow_speed_ms", "capacity_vph"])?;
        for e in &self.edges {
            w.row([
                e.id.to_string(),
                e.from.to_string(),
                e.to.to_string(),
                e.length.to_string(),
                e.free_flow_speed.to_string(),
                e.capacity.to_string(),
            ])?;
        }
        w.finish()
    }

    /// Splits every edge longer than `max_spacing` into
    /// `ceil(length / max_spacing)` equal sub-edges. Compliant edges keep their id;
    /// new nodes and sub-edges get fresh ids above the current maxima.
    pub fn densify(&self, max_spacing: f64) -> Result<Self> {
        if !(max_spacing > 0.0) {
            return Err(Error::InvalidInput(format!("densify spacing must be positive, got {max_spacing}")));
        }
        let mut next_node = self.nodes.last().map_or(0, |n| n.id + 1);
        let mut next_edge = self.edges.last().map_or(0, |e| e.id + 1);
        let mut nodes = self.nodes.clone();
        let mut edges = Vec::with_capacity(self.edges.len());

        for (ei, e) in self.edges.iter().enumerate() {
            let pieces = (e.length / max_spacing).ceil().max(1.0) as usize;
            if pieces == 1 {
                edges.push(e.clone());
                continue;
            }
            let a = self.nodes[self.edge_from[ei]].position;
            let b = self.nodes[self.edge_to[ei]].position;
            let sub_len = e.length / pieces as f64;
            let mut prev = e.from;
            for k in 1..=pieces {
                let to = if k == pieces {
                    e.to
                } else {
                    let id = next_node;
                    next_node += 1;
                    nodes.push(Node {
                        id,
                        position: interpolate(a, b, k as f64 / pieces as f64),
                    });
                    id
                };
                edges.push(Edge {
                    id: next_edge,
                    from: prev,
                    to,
                    length: sub_len,
                    free_flow_speed: e.free_flow_speed,
                    capacity: e.capacity,
                    parent: e.parent,
                });
                next_edge += 1;
                prev = to;
            }
        }
        Self::new(nodes, edges)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edge_index.get(&id).map(|&i| &self.edges[i])
    }

    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn edge_idx(&self, id: EdgeId) -> Option<usize> {
        self.edge_index.get(&id).copied()
    }

    /// Index of the tail and head node of edge index `ei`.
    pub fn endpoints(&self, ei: usize) -> (usize, usize) {
        (self.edge_from[ei], self.edge_to[ei])
    }

    /// Outgoing edge indices of node index `ni`, in id order.
    pub fn out_edges(&self, ni: usize) -> &[usize] {
        &self.out_edges[self.out_offsets[ni]..self.out_offsets[ni + 1]]
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    /// Free-flow time of every edge, by edge index.
    pub fn free_flow_times(&self) -> Vec<f64> {
        self.edges.iter().map(Edge::free_flow_time).collect()
    }

    /// Ids of all nodes whose haversine distance to `point` is at most `radius`.
    pub fn nodes_within(&self, point: LatLon, radius: f64) -> Vec<NodeId> {
        let mut ids: Vec<NodeId> = self
            .spatial
            .within(point, radius, |i| self.nodes[i].position)
            .into_iter()
            .map(|(i, _)| self.nodes[i].id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Node indices within `radius`, with their distances.
    pub fn nodes_within_idx(&self, point: LatLon, radius: f64) -> Vec<(usize, f64)> {
        self.spatial.within(point, radius, |i| self.nodes[i].position)
    }

    /// Time-minimal path from `src` to `dst` under `edge_time` (seconds, must be
    /// non-negative). Equal-time paths are resolved by the lexicographically
    /// smallest edge-id sequence. `Ok(None)` means unreachable.
    pub fn fastest_path<F>(&self, src: NodeId, dst: NodeId, edge_time: F) -> Result<Option<Route>>
    where
        F: Fn(&Edge) -> f64,
    {
        let times: Vec<f64> = self.edges.iter().map(&edge_time).collect();
        if let Some((e, t)) = self.edges.iter().zip(&times).find(|(_, t)| !(**t >= 0.0)) {
            return Err(Error::InvalidInput(format!("edge {} has invalid travel time {t}", e.id)));
        }
        let s = self.node_idx(src).ok_or_else(|| Error::InvalidInput(format!("unknown node {src}")))?;
        let d = self.node_idx(dst).ok_or_else(|| Error::InvalidInput(format!("unknown node {dst}")))?;
        let mut router = Router::new(self);
        router.run(self, s, &times, &SearchLimits::to_targets(&[d]));
        Ok(router.route_to(self, d))
    }

    /// Edge ids of a route expressed in edge indices.
    pub fn edge_ids(&self, route: &[usize]) -> Vec<EdgeId> {
        route.iter().map(|&i| self.edges[i].id).collect()
    }

    pub fn is_weakly_connected(&self) -> bool {
        if self.nodes.is_empty() {
            return true;
        }
        let mut undirected = vec![Vec::new(); self.nodes.len()];
        for (&f, &t) in self.edge_from.iter().zip(&self.edge_to) {
            undirected[f].push(t);
            undirected[t].push(f);
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(n) = queue.pop_front() {
            for &m in &undirected[n] {
                if !seen[m] {
                    seen[m] = true;
                    count += 1;
                    queue.push_back(m);
                }
            }
        }
        count == self.nodes.len()
    }
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(u64, T)>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| crate::io::csv_err(path, e))?;
    let mut rows = Vec::new();
    for record in reader.deserialize::<T>() {
        match record {
            Ok(row) => {
                // header is line 1; rows follow
                rows.push((rows.len() as u64 + 2, row));
            }
            Err(e) => {
                let line = e.position().map_or(rows.len() as u64 + 2, |p| p.line());
                return Err(Error::malformed(path, line, e.to_string()));
            }
        }
    }
    Ok(rows)
}
