//! A synthetic city: grid road network, kinematic taxi trips with injected
//! GPS faults, OD demand and a fleet distribution.
//!
//! Everything is drawn from seeded ChaCha streams, so a spec and a seed fully
//! determine the generated files. The building blocks are public for tests and
//! examples that need ground truth.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Utc, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::{OdEntry, OdMatrix};
use crate::config::{Inputs, PipelineConfig, WindowConfig};
use crate::error::{Error, Result};
use crate::geo::{destination, haversine, interpolate, BoundingBox, LatLon};
use crate::ingest::{write_raw_trips, CalendarTag, RawTrip};
use crate::network::{Edge, Node, RoadNetwork};
use crate::profiles::DayFilter;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
    /// Block length, meters.
    pub spacing: f64,
    /// South-west corner.
    pub origin: LatLon,
    /// Every n-th row and column is an arterial.
    pub arterial_every: usize,
    pub arterial_speed: f64,
    pub local_speed: f64,
    pub arterial_capacity: f64,
    pub local_capacity: f64,
}

impl Default for GridSpec {
    /// 36 × 36 nodes at 150 m: 5,040 directed edges.
    fn default() -> Self {
        Self {
            rows: 36,
            cols: 36,
            spacing: 150.0,
            origin: LatLon::new(24.70, 46.65),
            arterial_every: 6,
            arterial_speed: 16.7,
            local_speed: 11.1,
            arterial_capacity: 1200.0,
            local_capacity: 300.0,
        }
    }
}

impl GridSpec {
    pub fn square(n: usize, spacing: f64) -> Self {
        Self { rows: n, cols: n, spacing, ..Self::default() }
    }

    pub fn node_position(&self, r: usize, c: usize) -> LatLon {
        destination(destination(self.origin, 0.0, r as f64 * self.spacing), 90.0, c as f64 * self.spacing)
    }

    /// The grid's extent grown by `margin` meters on every side.
    pub fn bounds(&self, margin: f64) -> BoundingBox {
        let sw = destination(destination(self.origin, 180.0, margin), 270.0, margin);
        let ne = self.node_position(self.rows - 1, self.cols - 1);
        let ne = destination(destination(ne, 0.0, margin), 90.0, margin);
        BoundingBox { min_lat: sw.lat, min_lon: sw.lon, max_lat: ne.lat, max_lon: ne.lon }
    }
}

/// Two-way grid; node id is `row * cols + col`, edge ids count up from 0.
pub fn grid_network(spec: &GridSpec) -> Result<RoadNetwork> {
    if spec.rows < 2 || spec.cols < 2 || spec.arterial_every == 0 {
        return Err(Error::InvalidInput("grid needs at least 2 × 2 nodes".into()));
    }
    let id = |r: usize, c: usize| (r * spec.cols + c) as u64;
    let mut nodes = Vec::with_capacity(spec.rows * spec.cols);
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            nodes.push(Node { id: id(r, c), position: spec.node_position(r, c) });
        }
    }
    let mut edges = Vec::new();
    let mut link = |a: (usize, usize), b: (usize, usize), arterial: bool| {
        let length = haversine(nodes[id(a.0, a.1) as usize].position, nodes[id(b.0, b.1) as usize].position);
        let (speed, capacity) = if arterial {
            (spec.arterial_speed, spec.arterial_capacity)
        } else {
            (spec.local_speed, spec.local_capacity)
        };
        for (from, to) in [(id(a.0, a.1), id(b.0, b.1)), (id(b.0, b.1), id(a.0, a.1))] {
            let eid = edges.len() as u64;
            edges.push(Edge { id: eid, from, to, length, free_flow_speed: speed, capacity, parent: eid });
        }
    };
    for r in 0..spec.rows {
        for c in 0..spec.cols {
            if c + 1 < spec.cols {
                link((r, c), (r, c + 1), r % spec.arterial_every == 0);
            }
            if r + 1 < spec.rows {
                link((r, c), (r + 1, c), c % spec.arterial_every == 0);
            }
        }
    }
    RoadNetwork::new(nodes, edges)
}

/// Free-flow fastest path between two random nodes whose length lies in
/// `[min_m, max_m]`; `None` after 200 failed draws.
pub fn random_route<R: Rng>(network: &RoadNetwork, rng: &mut R, min_m: f64, max_m: f64) -> Option<Vec<usize>> {
    let n = network.node_count();
    for _ in 0..200 {
        let a = network.nodes()[rng.random_range(0..n)].id;
        let b = network.nodes()[rng.random_range(0..n)].id;
        if a == b {
            continue;
        }
        let Ok(Some(route)) = network.fastest_path(a, b, Edge::free_flow_time) else { continue };
        let len: f64 = route.edges.iter().map(|&e| network.edges()[e].length).sum();
        if (min_m..=max_m).contains(&len) {
            return Some(route.edges);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics {
    /// m/s².
    pub accel: f64,
    /// Comfortable braking, m/s².
    pub decel: f64,
    /// Fraction of free-flow speed the driver cruises at.
    pub cruise: f64,
    /// Chance of stopping at each intersection passed.
    pub stop_probability: f64,
    /// Stop duration range, seconds.
    pub dwell: (f64, f64),
}

impl Default for Kinematics {
    fn default() -> Self {
        Self { accel: 1.5, decel: 2.0, cruise: 0.9, stop_probability: 0.15, dwell: (5.0, 40.0) }
    }
}

/// One second of a simulated drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveSample {
    pub t: f64,
    pub pos: LatLon,
    pub speed: f64,
}

/// Random stops at intermediate intersections: `(distance along route, dwell)`.
pub fn random_stops<R: Rng>(network: &RoadNetwork, route: &[usize], kin: &Kinematics, rng: &mut R) -> Vec<(f64, f64)> {
    let mut at = 0.0;
    let mut stops = Vec::new();
    for &e in &route[..route.len().saturating_sub(1)] {
        at += network.edges()[e].length;
        if rng.random_bool(kin.stop_probability) {
            stops.push((at, rng.random_range(kin.dwell.0..=kin.dwell.1)));
        }
    }
    stops
}

/// Drives `route` from rest to rest at 1 Hz, halting for the given dwell at
/// each stop. Speed never exceeds the cruise fraction of the edge's free-flow
/// speed; braking starts in time to halt exactly at each stop.
pub fn drive(network: &RoadNetwork, route: &[usize], stops: &[(f64, f64)], kin: &Kinematics) -> Vec<DriveSample> {
    let edges: Vec<&Edge> = route.iter().map(|&e| &network.edges()[e]).collect();
    let mut starts = Vec::with_capacity(edges.len());
    let mut total = 0.0;
    for e in &edges {
        starts.push(total);
        total += e.length;
    }
    let position = |s: f64| -> LatLon {
        let k = starts.partition_point(|&x| x <= s).saturating_sub(1).min(edges.len() - 1);
        let e = edges[k];
        let a = network.node(e.from).unwrap().position;
        let b = network.node(e.to).unwrap().position;
        interpolate(a, b, ((s - starts[k]) / e.length).clamp(0.0, 1.0))
    };
    let limit = |s: f64| -> f64 {
        let k = starts.partition_point(|&x| x <= s).saturating_sub(1).min(edges.len() - 1);
        edges[k].free_flow_speed * kin.cruise
    };

    let mut halts: Vec<(f64, f64)> = stops.iter().copied().filter(|s| s.0 > 0.0 && s.0 < total).collect();
    halts.sort_by(|a, b| a.0.total_cmp(&b.0));
    halts.push((total, 0.0));

    let mut out = vec![DriveSample { t: 0.0, pos: position(0.0), speed: 0.0 }];
    let (mut s, mut v, mut t) = (0.0f64, 0.0f64, 0.0);
    let mut next = 0;
    while next < halts.len() {
        let (stop_at, dwell) = halts[next];
        let dist = stop_at - s;
        let brake = (2.0 * kin.decel * dist).sqrt();
        let target = limit(s).min(brake);
        let v_new = if target > v { (v + kin.accel).min(target) } else { target };
        let step = (0.5 * (v + v_new)).min(dist);
        t += 1.0;
        if dist - step < 0.5 {
            s = stop_at;
            v = 0.0;
            out.push(DriveSample { t, pos: position(s), speed: 0.0 });
            for _ in 0..dwell.round() as usize {
                t += 1.0;
                out.push(DriveSample { t, pos: position(s), speed: 0.0 });
            }
            next += 1;
        } else {
            s += step;
            v = v_new;
            out.push(DriveSample { t, pos: position(s), speed: v });
        }
    }
    out
}

/// Every `interval`-th sample with isotropic Gaussian noise of `sigma` meters.
pub fn sample<R: Rng>(track: &[DriveSample], interval: usize, sigma: f64, rng: &mut R) -> Vec<LatLon> {
    let noise = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    track
        .iter()
        .step_by(interval.max(1))
        .map(|p| jitter(p.pos, noise.sample(rng), noise.sample(rng)))
        .collect()
}

fn jitter(p: LatLon, north: f64, east: f64) -> LatLon {
    destination(destination(p, 0.0, north), 90.0, east)
}

/// Straight-ish track at a constant speed in [14, 25] m/s: `n` points,
/// `interval` seconds apart, heading wandering by a few degrees per step.
pub fn cruise_track<R: Rng>(rng: &mut R, start: LatLon, n: usize, interval: f64) -> (Vec<LatLon>, f64) {
    let speed = rng.random_range(14.0..=25.0);
    let mut heading: f64 = rng.random_range(0.0..360.0);
    let mut pts = Vec::with_capacity(n);
    let mut p = start;
    for _ in 0..n {
        pts.push(p);
        heading += rng.random_range(-5.0..=5.0);
        p = destination(p, heading, speed * interval);
    }
    (pts, speed)
}

/// Removes `count` points starting at `at`.
pub fn delete_points(points: &mut Vec<LatLon>, at: usize, count: usize) {
    points.drain(at..(at + count).min(points.len()));
}

/// Moves point `i` by `distance` meters on `bearing`.
pub fn teleport_point(points: &mut [LatLon], i: usize, bearing: f64, distance: f64) {
    points[i] = destination(points[i], bearing, distance);
}

/// A raw trip whose duration spans `points.len() - 1` intervals.
pub fn raw_trip(trip_id: String, pickup: DateTime<Utc>, interval: f64, points: Vec<LatLon>) -> RawTrip {
    let secs = interval * points.len().saturating_sub(1) as f64;
    let dropoff = pickup + Duration::milliseconds((secs * 1000.0).round() as i64);
    let mut trip = RawTrip { trip_id, pickup, dropoff, reported_length: 0.0, points };
    trip.reported_length = (trip.polyline_length_km() * 1000.0).round() / 1000.0;
    trip
}

/// Everything needed to generate a city.
#[derive(Debug, Clone, PartialEq)]
pub struct CitySpec {
    pub grid: GridSpec,
    pub trips: usize,
    /// GPS sampling interval, whole seconds.
    pub interval: usize,
    pub gps_sigma: f64,
    pub route_length: (f64, f64),
    pub case_a_rate: f64,
    pub case_b_rate: f64,
    pub stay_rate: f64,
    pub outside_rate: f64,
    /// Local date of the first day of data.
    pub first_day: NaiveDate,
    pub days: u32,
    pub utc_offset_minutes: i32,
    pub weekend: Vec<Weekday>,
    /// OD pairs per peak window and for the off-peak window.
    pub od_pairs_peak: usize,
    pub od_pairs_offpeak: usize,
    /// Cars per hour drawn uniformly from this range.
    pub demand: (f64, f64),
    /// Probability per fuel-economy bin 1..=14.
    pub fleet: [f64; 14],
    pub seed: u64,
}

impl Default for CitySpec {
    fn default() -> Self {
        Self {
            grid: GridSpec::default(),
            trips: 8000,
            interval: 10,
            gps_sigma: 1.5,
            route_length: (1200.0, 3750.0),
            case_a_rate: 0.08,
            case_b_rate: 0.10,
            stay_rate: 0.05,
            outside_rate: 0.02,
            first_day: NaiveDate::from_ymd_opt(2016, 5, 23).unwrap(),
            days: 28,
            utc_offset_minutes: 180,
            weekend: vec![Weekday::Fri, Weekday::Sat],
            od_pairs_peak: 2000,
            od_pairs_offpeak: 1400,
            demand: (0.2, 7.5),
            fleet: [0.03, 0.05, 0.08, 0.10, 0.12, 0.14, 0.15, 0.11, 0.07, 0.05, 0.04, 0.02, 0.03, 0.01],
            seed: 42,
        }
    }
}

/// Local hours the trip generator favours, one per default window.
const BUSY_HOURS: [u32; 3] = [8, 12, 17];

/// What kind of fault a generated trip carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Injected {
    None,
    MissingPoints,
    Teleport,
    Stay,
    OutsideRegion,
}

#[derive(Debug, Clone, PartialEq)]
pub struct City {
    pub spec: CitySpec,
    pub network: RoadNetwork,
    pub trips: Vec<RawTrip>,
    pub injected: Vec<Injected>,
    /// Ground-truth edge indices per trip.
    pub routes: Vec<Vec<usize>>,
    pub od: Vec<(String, OdMatrix)>,
}

fn stream(seed: u64, n: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(n);
    rng
}

fn pickup_time<R: Rng>(spec: &CitySpec, rng: &mut R) -> DateTime<Utc> {
    let day = spec.first_day + Duration::days(rng.random_range(0..spec.days.max(1)) as i64);
    let hour = if rng.random_bool(0.6) {
        BUSY_HOURS[rng.random_range(0..BUSY_HOURS.len())]
    } else {
        rng.random_range(0..24)
    };
    // start early in the hour so most of the trip stays inside it
    let secs = hour * 3600 + rng.random_range(0..1800);
    let local = day.and_hms_opt(0, 0, 0).unwrap() + Duration::seconds(secs as i64);
    let offset = chrono::FixedOffset::east_opt(spec.utc_offset_minutes * 60).unwrap();
    offset.from_local_datetime(&local).unwrap().with_timezone(&Utc)
}

fn generate_trip(spec: &CitySpec, network: &RoadNetwork, i: usize) -> Option<(RawTrip, Injected, Vec<usize>)> {
    let mut rng = stream(spec.seed, 1 + i as u64);
    let route = random_route(network, &mut rng, spec.route_length.0, spec.route_length.1)?;
    let pickup = pickup_time(spec, &mut rng);
    let kin = Kinematics::default();
    let mut stops = random_stops(network, &route, &kin, &mut rng);

    let u: f64 = rng.random();
    let cuts = [
        (spec.case_a_rate, Injected::MissingPoints),
        (spec.case_b_rate, Injected::Teleport),
        (spec.stay_rate, Injected::Stay),
        (spec.outside_rate, Injected::OutsideRegion),
    ];
    let mut acc = 0.0;
    let mut fault = Injected::None;
    for (rate, kind) in cuts {
        acc += rate;
        if u < acc {
            fault = kind;
            break;
        }
    }

    if fault == Injected::Stay && route.len() > 2 {
        let k = rng.random_range(1..route.len() - 1);
        let at: f64 = route[..k].iter().map(|&e| network.edges()[e].length).sum();
        stops.retain(|s| (s.0 - at).abs() > 1.0);
        stops.push((at, rng.random_range(2400.0..=3000.0)));
    }
    let track = drive(network, &route, &stops, &kin);
    let mut points = sample(&track, spec.interval, spec.gps_sigma, &mut rng);
    let n = points.len();
    match fault {
        Injected::MissingPoints if n > 12 => {
            // take the points out where the car is fastest so the gap shows up as a spike
            let fastest = (3..n - 6)
                .max_by(|&a, &b| {
                    let va = track[(a * spec.interval).min(track.len() - 1)].speed;
                    let vb = track[(b * spec.interval).min(track.len() - 1)].speed;
                    va.total_cmp(&vb).then(b.cmp(&a))
                })
                .unwrap();
            delete_points(&mut points, fastest, 3);
        }
        Injected::Teleport if n > 6 => {
            let i = rng.random_range(2..n - 2);
            teleport_point(&mut points, i, rng.random_range(0.0..360.0), rng.random_range(900.0..1200.0));
        }
        Injected::OutsideRegion => {
            for p in &mut points {
                *p = destination(*p, 0.0, 20_000.0);
            }
        }
        _ => {}
    }
    let id = format!("T{:06}", i + 1);
    let interval = spec.interval as f64;
    // deleted points still leave the trip lasting its true duration
    let secs = (n - 1) as f64 * interval;
    let mut trip = raw_trip(id, pickup, interval, points);
    trip.dropoff = pickup + Duration::seconds(secs as i64);
    Some((trip, fault, route))
}

fn od_matrix(spec: &CitySpec, network: &RoadNetwork, window: &str, pairs: usize, stream_id: u64) -> Result<OdMatrix> {
    let mut rng = stream(spec.seed, stream_id);
    let n = network.node_count();
    let mut seen = BTreeSet::new();
    let mut entries = Vec::with_capacity(pairs);
    while entries.len() < pairs.min(n * (n - 1)) {
        let o = network.nodes()[rng.random_range(0..n)].id;
        let d = network.nodes()[rng.random_range(0..n)].id;
        if o == d || !seen.insert((o, d)) {
            continue;
        }
        let demand = (rng.random_range(spec.demand.0..=spec.demand.1) * 1000.0).round() / 1000.0;
        entries.push(OdEntry { origin: o, dest: d, demand });
    }
    OdMatrix::new(window, entries)
}

/// Window labels, their peak factors and OD pair counts.
fn window_plan(spec: &CitySpec) -> Vec<(WindowConfig, usize)> {
    let w = |label: &str, start: u32, factor: f64| WindowConfig {
        label: label.into(),
        days: DayFilter::Weekday,
        start_hour: start,
        end_hour: start + 1,
        peak_factor: factor,
        od: Some(format!("od_{label}.csv").into()),
    };
    vec![
        (w("morning_peak", 8, 1.5), spec.od_pairs_peak),
        (w("midday_offpeak", 12, 1.0), spec.od_pairs_offpeak),
        (w("evening_peak", 17, 1.5), spec.od_pairs_peak),
    ]
}

impl City {
    pub fn generate(spec: &CitySpec) -> Result<Self> {
        let network = grid_network(&spec.grid)?;
        let generated: Vec<_> = (0..spec.trips)
            .into_par_iter()
            .map(|i| generate_trip(spec, &network, i))
            .collect();
        let mut trips = Vec::with_capacity(spec.trips);
        let mut injected = Vec::with_capacity(spec.trips);
        let mut routes = Vec::with_capacity(spec.trips);
        for (trip, fault, route) in generated.into_iter().flatten() {
            trips.push(trip);
            injected.push(fault);
            routes.push(route);
        }
        let od = window_plan(spec)
            .into_iter()
            .enumerate()
            .map(|(k, (w, pairs))| Ok((w.label.clone(), od_matrix(spec, &network, &w.label, pairs, 1 << 40 | k as u64)?)))
            .collect::<Result<_>>()?;
        Ok(Self { spec: spec.clone(), network, trips, injected, routes, od })
    }

    /// Pipeline config pointing at the files [`City::write`] produces.
    pub fn config(&self) -> PipelineConfig {
        let spec = &self.spec;
        let last = spec.first_day + Duration::days(spec.days as i64 - 1);
        let half = spec.first_day + Duration::days(spec.days as i64 / 2);
        PipelineConfig {
            seed: spec.seed,
            inputs: Inputs {
                nodes: "nodes.csv".into(),
                edges: "edges.csv".into(),
                trips: "trips.csv".into(),
                fleet: "fleet.csv".into(),
                drive_cycle: None,
                doe_anchors: None,
            },
            region: Some(spec.grid.bounds(500.0)),
            windows: window_plan(spec).into_iter().map(|(w, _)| w).collect(),
            calendar: vec![
                CalendarTag { name: "non_ramadan".into(), ranges: vec![(spec.first_day, half - Duration::days(1))] },
                CalendarTag { name: "ramadan".into(), ranges: vec![(half, last)] },
            ],
            profiles: crate::config::ProfileConfig {
                utc_offset_minutes: spec.utc_offset_minutes,
                weekend: spec.weekend.clone(),
                ..Default::default()
            },
            ..PipelineConfig::default()
        }
    }

    /// Writes the network, trips, fleet, OD matrices, a `streetfuel.toml`
    /// config and a `manifest.json` of counts into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.network.write_csv(&dir.join("nodes.csv"), &dir.join("edges.csv"))?;
        write_raw_trips(&dir.join("trips.csv"), &self.trips)?;
        let mut w = crate::io::csv_writer(&dir.join("fleet.csv"))?;
        w.row(["bin_id", "probability"])?;
        for (i, p) in self.spec.fleet.iter().enumerate() {
            w.row([(i + 1).to_string(), p.to_string()])?;
        }
        w.finish()?;
        for (label, od) in &self.od {
            od.write_csv(&dir.join(format!("od_{label}.csv")))?;
        }
        crate::io::write_atomic(&dir.join("streetfuel.toml"), self.config().to_toml()?.as_bytes())?;

        let mut faults = std::collections::BTreeMap::new();
        for f in &self.injected {
            *faults.entry(*f).or_insert(0usize) += 1;
        }
        let manifest = serde_json::json!({
            "seed": self.spec.seed,
            "nodes": self.network.node_count(),
            "edges": self.network.edge_count(),
            "trips": self.trips.len(),
            "injected": faults.iter().map(|(k, v)| (serde_json::to_value(k).unwrap().as_str().unwrap().to_string(), *v)).collect::<std::collections::BTreeMap<_, _>>(),
            "od_pairs": self.od.iter().map(|(l, od)| (l.clone(), od.entries.len())).collect::<std::collections::BTreeMap<_, _>>(),
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::InvalidInput(e.to_string()))?;
        crate::io::write_atomic(&dir.join("manifest.json"), text.as_bytes())
    }
}
