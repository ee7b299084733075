//! Deterministic shortest-path map matching.
//!
//! Each GPS point gets the set of network nodes within a radius. Consecutive
//! candidate sets form the layers of a graph whose arcs are fastest network
//! paths between candidates, each weighted by its travel time plus a penalty
//! for how much farther its target lies from the GPS point than the closest
//! candidate. Empty layers, or layers no arc reaches, split the trajectory
//! into contiguous runs; the cheapest layered path of each run is the match.
//!
//! Time along a hop is split over the hop's edges in proportion to their
//! free-flow times, which keeps the hop's observed duration exactly.

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::CleanTrip;
use crate::network::{EdgeId, NodeId, RoadNetwork, Route, Router, SearchLimits};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchParams {
    /// Candidate search radius, meters.
    pub radius: f64,
    /// Seconds of penalty per meter beyond the closest candidate.
    pub penalty_rate: f64,
    /// Inter-layer searches stop after this multiple of the hop's duration.
    pub budget_factor: f64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { radius: 25.0, penalty_rate: 1.0, budget_factor: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub gps_index: usize,
    /// Node ids with distance to the GPS point, closest first.
    pub nodes: Vec<(NodeId, f64)>,
}

/// One candidate set per GPS point, possibly empty.
pub fn build_candidates(trip: &CleanTrip, network: &RoadNetwork, radius: f64) -> Vec<CandidateSet> {
    trip.points
        .iter()
        .enumerate()
        .map(|(i, p)| CandidateSet {
            gps_index: i,
            nodes: network
                .nodes_within_idx(p.pos, radius)
                .into_iter()
                .map(|(n, d)| (network.nodes()[n].id, d))
                .collect(),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Index of the contiguous run this traversal belongs to.
    pub run: u32,
    pub edge: EdgeId,
    /// Seconds from the trip's first point.
    pub entry: f64,
    pub exit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchedRoute {
    pub trip_id: String,
    pub segments: Vec<Segment>,
    /// Hop ranges (hop `k` joins points `k` and `k + 1`) that no run covers.
    pub gaps: Vec<Range<usize>>,
    /// Hop ranges covered by each run, in run order.
    pub runs: Vec<Range<usize>>,
    /// Layered-path cost of each run.
    pub run_costs: Vec<f64>,
}

impl MatchedRoute {
    /// Merges consecutive traversals of sub-edges cut from the same edge of the
    /// undensified network, reporting them under the parent edge id.
    pub fn collapse_to_parents(&self, dense: &RoadNetwork) -> MatchedRoute {
        let mut segments: Vec<Segment> = Vec::with_capacity(self.segments.len());
        let mut prev: Option<(u32, &crate::network::Edge)> = None;
        for s in &self.segments {
            let edge = dense.edge(s.edge);
            let parent = edge.map_or(s.edge, |e| e.parent);
            // sub-edge k + 1 of the same parent directly after sub-edge k
            let continues = match (prev, edge) {
                (Some((run, p)), Some(e)) => run == s.run && p.parent == e.parent && p.to == e.from,
                _ => false,
            };
            match segments.last_mut() {
                Some(last) if continues => last.exit = s.exit,
                _ => segments.push(Segment { edge: parent, ..*s }),
            }
            prev = edge.map(|e| (s.run, e));
        }
        MatchedRoute { segments, ..self.clone() }
    }

    /// Consecutive traversals within a run that do not share an endpoint in `network`.
    pub fn connectivity_violations(&self, network: &RoadNetwork) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].run == w[1].run)
            .filter(|w| match (network.edge(w[0].edge), network.edge(w[1].edge)) {
                (Some(a), Some(b)) => a.to != b.from,
                _ => true,
            })
            .count()
    }

    pub fn gap_hops(&self) -> usize {
        self.gaps.iter().map(|g| g.len()).sum()
    }

    pub fn matched_hops(&self) -> usize {
        self.runs.iter().map(|g| g.len()).sum()
    }

    pub fn rows(&self) -> impl Iterator<Item = SegmentRow> + '_ {
        self.segments.iter().enumerate().map(|(k, s)| SegmentRow {
            trip_id: self.trip_id.clone(),
            seq: k,
            edge_id: s.edge,
            entry_s: s.entry,
            exit_s: s.exit,
        })
    }

    /// Distinct edge ids in traversal order.
    pub fn edge_sequence(&self) -> Vec<EdgeId> {
        let mut out: Vec<EdgeId> = Vec::new();
        for s in &self.segments {
            if out.last() != Some(&s.edge) {
                out.push(s.edge);
            }
        }
        out
    }
}

struct Layer {
    point: usize,
    nodes: Vec<(usize, f64)>,
    cost: Vec<f64>,
    back: Vec<Option<(usize, Route)>>,
}

/// Per-thread matching state; holds the router scratch space.
pub struct Matcher<'a> {
    network: &'a RoadNetwork,
    params: MatchParams,
    router: Router,
    times: Vec<f64>,
}

impl<'a> Matcher<'a> {
    pub fn new(network: &'a RoadNetwork, params: MatchParams) -> Self {
        Self { network, params, router: Router::new(network), times: network.free_flow_times() }
    }

    fn penalties(&self, nodes: &[(usize, f64)]) -> Vec<f64> {
        let closest = nodes.first().map_or(0.0, |n| n.1);
        nodes.iter().map(|n| self.params.penalty_rate * (n.1 - closest)).collect()
    }

    fn open_layer(&self, point: usize, nodes: Vec<(usize, f64)>) -> Layer {
        let cost = self.penalties(&nodes);
        let back = vec![None; nodes.len()];
        Layer { point, nodes, cost, back }
    }

    /// Extends the run into `next`; returns `None` when no candidate of `next` is reachable.
    fn transition(&mut self, prev: &Layer, point: usize, nodes: Vec<(usize, f64)>, dt: f64) -> Option<Layer> {
        let penalty = self.penalties(&nodes);
        let targets: Vec<usize> = nodes.iter().map(|n| n.0).collect();
        let live: Vec<usize> = (0..prev.nodes.len()).filter(|&ai| prev.cost[ai].is_finite()).collect();
        let sources: Vec<(usize, f64)> = live.iter().map(|&ai| (prev.nodes[ai].0, prev.cost[ai])).collect();
        let floor = sources.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
        let limits = SearchLimits::to_targets(&targets).with_budget(floor + self.params.budget_factor * dt);
        // One search seeded with every candidate's accumulated cost yields
        // min over a of (cost_a + travel time a -> b) for every target b.
        self.router.run_from(self.network, &sources, &self.times, &limits);
        let mut cost = vec![f64::INFINITY; nodes.len()];
        let mut back: Vec<Option<(usize, Route)>> = vec![None; nodes.len()];
        for (bi, &b) in targets.iter().enumerate() {
            let (Some(t), Some(root)) = (self.router.distance(b), self.router.root_of(b)) else { continue };
            cost[bi] = t + penalty[bi];
            back[bi] = self.router.route_to(self.network, b).map(|r| (live[root], r));
        }
        cost.iter().any(|c| c.is_finite()).then_some(Layer { point, nodes, cost, back })
    }

    fn close_run(&self, trip: &CleanTrip, layers: &mut Vec<Layer>, out: &mut MatchedRoute) {
        if layers.len() < 2 {
            layers.clear();
            return;
        }
        let last = layers.last().unwrap();
        let (mut bi, best) = last
            .cost
            .iter()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (i, &c)| if c < acc.1 { (i, c) } else { acc });
        let run = out.runs.len() as u32;
        let mut hops: Vec<(usize, Route)> = Vec::with_capacity(layers.len() - 1);
        for layer in layers.iter().rev() {
            match &layer.back[bi] {
                Some((ai, route)) => {
                    hops.push((layer.point - 1, route.clone()));
                    bi = *ai;
                }
                None => break,
            }
        }
        hops.reverse();
        for (hop, route) in hops {
            let t0 = trip.offset(hop) - trip.offset(0);
            let dt = trip.offset(hop + 1) - trip.offset(hop);
            let ff: Vec<f64> = route.edges.iter().map(|&e| self.times[e]).collect();
            let total: f64 = ff.iter().sum();
            let mut acc = 0.0;
            for (&e, f) in route.edges.iter().zip(ff) {
                let entry = t0 + dt * acc / total;
                acc += f;
                let exit = t0 + dt * acc / total;
                out.segments.push(Segment { run, edge: self.network.edges()[e].id, entry, exit });
            }
        }
        out.runs.push(layers[0].point..last.point);
        out.run_costs.push(best);
        layers.clear();
    }

    pub fn match_trip(&mut self, trip: &CleanTrip) -> MatchedRoute {
        let mut out = MatchedRoute {
            trip_id: trip.trip_id.clone(),
            segments: Vec::new(),
            gaps: Vec::new(),
            runs: Vec::new(),
            run_costs: Vec::new(),
        };
        let mut layers: Vec<Layer> = Vec::new();
        for (i, p) in trip.points.iter().enumerate() {
            let nodes = self.network.nodes_within_idx(p.pos, self.params.radius);
            if nodes.is_empty() {
                self.close_run(trip, &mut layers, &mut out);
                continue;
            }
            let next = match layers.last() {
                None => None,
                Some(prev) => {
                    let dt = trip.offset(i) - trip.offset(i - 1);
                    self.transition(prev, i, nodes.clone(), dt)
                }
            };
            match next {
                Some(layer) => layers.push(layer),
                None => {
                    self.close_run(trip, &mut layers, &mut out);
                    layers.push(self.open_layer(i, nodes));
                }
            }
        }
        self.close_run(trip, &mut layers, &mut out);
        out.gaps = uncovered(trip.len().saturating_sub(1), &out.runs);
        out
    }
}

fn uncovered(hops: usize, runs: &[Range<usize>]) -> Vec<Range<usize>> {
    let mut gaps = Vec::new();
    let mut at = 0;
    for r in runs {
        if r.start > at {
            gaps.push(at..r.start);
        }
        at = r.end;
    }
    if hops > at {
        gaps.push(at..hops);
    }
    gaps
}

pub fn match_trip(trip: &CleanTrip, network: &RoadNetwork, params: &MatchParams) -> MatchedRoute {
    Matcher::new(network, params.clone()).match_trip(trip)
}

/// Matches every trip in parallel; output order follows input order.
pub fn match_all(trips: &[CleanTrip], network: &RoadNetwork, params: &MatchParams) -> Vec<MatchedRoute> {
    trips
        .par_iter()
        .map_init(|| Matcher::new(network, params.clone()), |m, t| m.match_trip(t))
        .collect()
}

/// Sum of free-flow times over a route's traversals, in seconds.
pub fn free_flow_time(route: &MatchedRoute, network: &RoadNetwork) -> f64 {
    route
        .segments
        .iter()
        .filter_map(|s| network.edge(s.edge))
        .map(|e| e.free_flow_time())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRow {
    pub trip_id: String,
    pub seq: usize,
    pub edge_id: EdgeId,
    pub entry_s: f64,
    pub exit_s: f64,
}

/// Writes `trip_id,seq,edge_id,entry_s,exit_s`.
pub fn write_routes(path: &Path, routes: &[MatchedRoute]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    for row in routes.iter().flat_map(|r| r.rows()) {
        w.record(row)?;
    }
    w.finish()
}

pub fn read_routes(path: &Path) -> Result<Vec<SegmentRow>> {
    crate::io::read_csv(path)
}

/// Per-trip comparison of observed and free-flow times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub trip_id: String,
    /// Trip duration from its timestamps, seconds.
    pub observed_s: f64,
    /// Sum of free-flow times over the matched traversals, seconds.
    pub free_flow_s: f64,
    /// The whole trip matched without gaps.
    pub matched: bool,
}

impl MatchSummary {
    pub fn new(route: &MatchedRoute, trip: &CleanTrip, network: &RoadNetwork) -> Self {
        Self {
            trip_id: trip.trip_id.clone(),
            observed_s: trip.duration(),
            free_flow_s: free_flow_time(route, network),
            matched: route.gaps.is_empty() && !route.segments.is_empty(),
        }
    }
}

/// Writes `trip_id,observed_s,free_flow_s,matched`.
pub fn write_summaries(path: &Path, rows: &[MatchSummary]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    for r in rows {
        w.record(r)?;
    }
    w.finish()
}

pub fn read_summaries(path: &Path) -> Result<Vec<MatchSummary>> {
    crate::io::read_csv(path)
}

/// Writes `trip_id,first_hop,end_hop` for every gap.
pub fn write_gaps(path: &Path, routes: &[MatchedRoute]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    w.row(["trip_id", "first_hop", "end_hop"])?;
    for r in routes {
        for g in &r.gaps {
            w.row([r.trip_id.clone(), g.start.to_string(), g.end.to_string()])?;
        }
    }
    w.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, LatLon};
    use crate::ingest::{parse_timestamp, TrackPoint};
    use crate::network::{Edge, Node};

    /// A 3x3 block grid, 100 m blocks, two-way streets, densified to 10 m.
    fn grid() -> (RoadNetwork, RoadNetwork) {
        let origin = LatLon::new(24.7, 46.7);
        let mut nodes = Vec::new();
        for r in 0..4u64 {
            for c in 0..4u64 {
                let p = destination(destination(origin, 0.0, r as f64 * 100.0), 90.0, c as f64 * 100.0);
                nodes.push(Node { id: r * 4 + c, position: p });
            }
        }
        let mut edges = Vec::new();
        let mut id = 0;
        let mut add = |a: u64, b: u64, edges: &mut Vec<Edge>| {
            let len = nodes[a as usize].position.haversine(&nodes[b as usize].position);
            edges.push(Edge { id, from: a, to: b, length: len, free_flow_speed: 10.0, capacity: 600.0, parent: id });
            id += 1;
        };
        for r in 0..4u64 {
            for c in 0..4u64 {
                let n = r * 4 + c;
                if c < 3 {
                    add(n, n + 1, &mut edges);
                    add(n + 1, n, &mut edges);
                }
                if r < 3 {
                    add(n, n + 4, &mut edges);
                    add(n + 4, n, &mut edges);
                }
            }
        }
        let net = RoadNetwork::new(nodes, edges).unwrap();
        let dense = net.densify(10.0).unwrap();
        (net, dense)
    }

    fn trip_along(net: &RoadNetwork, path: &[u64], step: f64) -> CleanTrip {
        let mut pts = Vec::new();
        let mut carry = 0.0;
        for w in path.windows(2) {
            let a = net.node(w[0]).unwrap().position;
            let b = net.node(w[1]).unwrap().position;
            let len = a.haversine(&b);
            let mut s = carry;
            while s < len - 1e-9 {
                pts.push(crate::geo::interpolate(a, b, s / len));
                s += step;
            }
            carry = s - len;
        }
        pts.push(net.node(*path.last().unwrap()).unwrap().position);
        CleanTrip {
            trip_id: "g".into(),
            parent_trip: None,
            start: parse_timestamp("2016-03-01T08:00:00Z").unwrap(),
            interval: 5.0,
            points: pts.into_iter().enumerate().map(|(i, pos)| TrackPoint { slot: i as u32, pos }).collect(),
        }
    }

    fn parents_of(net: &RoadNetwork, nodes: &[u64]) -> Vec<EdgeId> {
        nodes
            .windows(2)
            .map(|w| net.edges().iter().find(|e| e.from == w[0] && e.to == w[1]).unwrap().id)
            .collect()
    }

    #[test]
    fn noise_free_walk_recovers_edges() {
        let (net, dense) = grid();
        let path = [0, 1, 5, 6, 10, 11, 15];
        let trip = trip_along(&net, &path, 40.0);
        let m = match_trip(&trip, &dense, &MatchParams::default());
        assert!(m.gaps.is_empty());
        assert_eq!(m.connectivity_violations(&dense), 0);
        let parents = m.collapse_to_parents(&dense);
        assert_eq!(parents.edge_sequence(), parents_of(&net, &path));
        assert_eq!(parents.connectivity_violations(&net), 0);
        let last = m.segments.last().unwrap();
        assert!((last.exit - trip.duration()).abs() < 1e-9);
        for w in m.segments.windows(2) {
            assert!(w[0].entry < w[0].exit);
            assert!(w[0].exit <= w[1].entry + 1e-9);
        }
    }

    #[test]
    fn unmatched_middle_splits_runs() {
        let (net, dense) = grid();
        let mut trip = trip_along(&net, &[0, 1, 2, 3], 20.0);
        let n = trip.len();
        for p in &mut trip.points[n / 3..2 * n / 3] {
            p.pos = destination(p.pos, 180.0, 400.0);
        }
        let m = match_trip(&trip, &dense, &MatchParams::default());
        assert_eq!(m.runs.len(), 2);
        assert_eq!(m.gaps.len(), 1);
        assert_eq!(m.matched_hops() + m.gap_hops(), n - 1);
    }

    #[test]
    fn no_candidates_is_one_full_gap() {
        let (net, dense) = grid();
        let mut trip = trip_along(&net, &[0, 1, 2], 20.0);
        for p in &mut trip.points {
            p.pos = destination(p.pos, 180.0, 5000.0);
        }
        let m = match_trip(&trip, &dense, &MatchParams::default());
        assert!(m.segments.is_empty());
        assert_eq!(m.gaps, vec![0..trip.len() - 1]);
    }

    #[test]
    fn candidates_on_a_node() {
        let (_, dense) = grid();
        let node = &dense.nodes()[5];
        let trip = CleanTrip {
            trip_id: "c".into(),
            parent_trip: None,
            start: parse_timestamp("2016-03-01T08:00:00Z").unwrap(),
            interval: 5.0,
            points: vec![
                TrackPoint { slot: 0, pos: node.position },
                TrackPoint { slot: 1, pos: destination(node.position, 180.0, 5000.0) },
            ],
        };
        let c = build_candidates(&trip, &dense, 25.0);
        assert_eq!(c[0].nodes[0].0, node.id);
        assert!(c[0].nodes[0].1 < 1e-6);
        assert!(c[1].nodes.is_empty());
    }
}
