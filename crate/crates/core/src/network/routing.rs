use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::RoadNetwork;

const NO_EDGE: u32 = u32::MAX;

/// A path through the network as edge indices into [`RoadNetwork::edges`].
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub edges: Vec<usize>,
    /// Seconds.
    pub time: f64,
}

/// Stopping rules for a search.
#[derive(Debug, Clone, Default)]
pub struct SearchLimits {
    /// Node indices whose settlement ends the search; empty means settle everything reachable.
    pub targets: Vec<usize>,
    /// Nodes farther than this many seconds are left unsettled.
    pub max_time: Option<f64>,
}

impl SearchLimits {
    pub fn to_targets(targets: &[usize]) -> Self {
        Self { targets: targets.to_vec(), max_time: None }
    }

    pub fn full_tree() -> Self {
        Self::default()
    }

    pub fn with_budget(mut self, seconds: f64) -> Self {
        self.max_time = Some(seconds);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Reusable single-source Dijkstra. Scratch arrays are sized once per network
/// and invalidated with a generation stamp, so repeated small searches cost
/// only what they touch.
#[derive(Debug, Clone)]
pub struct Router {
    dist: Vec<f64>,
    pred: Vec<u32>,
    seen: Vec<u32>,
    settled: Vec<u32>,
    is_target: Vec<u32>,
    generation: u32,
    heap: BinaryHeap<Entry>,
    root: Vec<u32>,
}

impl Router {
    pub fn new(network: &RoadNetwork) -> Self {
        let n = network.node_count();
        Self {
            dist: vec![f64::INFINITY; n],
            pred: vec![NO_EDGE; n],
            seen: vec![0; n],
            settled: vec![0; n],
            is_target: vec![0; n],
            generation: 0,
            heap: BinaryHeap::new(),
            root: vec![0; n],
        }
    }

    fn next_generation(&mut self) {
        self.generation = self.generation.wrapping_add(1);
        if self.generation == 0 {
            self.seen.iter_mut().for_each(|s| *s = 0);
            self.settled.iter_mut().for_each(|s| *s = 0);
            self.is_target.iter_mut().for_each(|s| *s = 0);
            self.generation = 1;
        }
        self.heap.clear();
    }

    /// Runs Dijkstra from node index `source` with per-edge-index `times`.
    pub fn run(&mut self, network: &RoadNetwork, source: usize, times: &[f64], limits: &SearchLimits) {
        self.run_from(network, &[(source, 0.0)], times, limits);
    }

    /// Multi-source Dijkstra: each `(node, offset)` starts with time `offset`, so
    /// a node's distance is `min over sources (offset + path time)`. The budget
    /// in `limits` applies to these offset-inclusive times.
    pub fn run_from(&mut self, network: &RoadNetwork, sources: &[(usize, f64)], times: &[f64], limits: &SearchLimits) {
        self.next_generation();
        let g = self.generation;
        let mut remaining = 0usize;
        for &t in &limits.targets {
            if self.is_target[t] != g {
                self.is_target[t] = g;
                remaining += 1;
            }
        }
        let budget = limits.max_time.unwrap_or(f64::INFINITY);

        for (k, &(source, offset)) in sources.iter().enumerate() {
            if self.seen[source] == g && self.dist[source] <= offset {
                continue;
            }
            self.seen[source] = g;
            self.dist[source] = offset;
            self.pred[source] = NO_EDGE;
            self.root[source] = k as u32;
            self.heap.push(Entry { time: offset, node: source });
        }

        while let Some(Entry { time, node }) = self.heap.pop() {
            if self.settled[node] == g || time > self.dist[node] {
                continue;
            }
            if time > budget {
                break;
            }
            self.settled[node] = g;
            if self.is_target[node] == g {
                remaining -= 1;
                if remaining == 0 {
                    break;
                }
            }
            for &e in network.out_edges(node) {
                let (_, to) = network.endpoints(e);
                let nd = time + times[e];
                if self.seen[to] != g || nd < self.dist[to] {
                    self.seen[to] = g;
                    self.dist[to] = nd;
                    self.pred[to] = e as u32;
                    self.root[to] = self.root[node];
                    self.heap.push(Entry { time: nd, node: to });
                } else if nd == self.dist[to]
                    && self.settled[to] != g
                    && self.pred[to] != e as u32
                    && self.extension_is_smaller(network, node, e, to)
                {
                    self.pred[to] = e as u32;
                    self.root[to] = self.root[node];
                }
            }
        }
    }

    /// Whether path(`via`) + `edge` is lexicographically smaller than the
    /// currently recorded path to `to`.
    fn extension_is_smaller(&self, network: &RoadNetwork, via: usize, edge: usize, to: usize) -> bool {
        let mut candidate = self.reversed_path(network, via);
        candidate.reverse();
        candidate.push(edge);
        let mut current = self.reversed_path(network, to);
        current.reverse();
        candidate < current
    }

    fn reversed_path(&self, network: &RoadNetwork, mut node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        loop {
            let e = self.pred[node];
            if e == NO_EDGE {
                break;
            }
            out.push(e as usize);
            node = network.endpoints(e as usize).0;
        }
        out
    }

    /// Settled travel time to node index `node`.
    pub fn distance(&self, node: usize) -> Option<f64> {
        (self.settled[node] == self.generation).then(|| self.dist[node])
    }

    /// Position in the source list of the source whose tree reached `node`.
    pub fn root_of(&self, node: usize) -> Option<usize> {
        self.distance(node).map(|_| self.root[node] as usize)
    }

    /// Route to a settled node, or `None` if it was not reached within the limits.
    pub fn route_to(&self, network: &RoadNetwork, node: usize) -> Option<Route> {
        let time = self.distance(node)?;
        let mut edges = self.reversed_path(network, node);
        edges.reverse();
        Some(Route { edges, time })
    }
}
