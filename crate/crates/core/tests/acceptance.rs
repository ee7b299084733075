//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.
//!
//! Runs without the libtest harness so the criteria execute sequentially and
//! their timings are not distorted by other tests sharing the machine.

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use streetfuel::assignment::{ita_assign, AssignParams, OdEntry, OdMatrix};
use streetfuel::fuel::{calibrate, streetsmart_fc, CalibrationOptions, DriveCycle, Fleet};
use streetfuel::geo::{destination, LatLon};
use streetfuel::ingest::{
    clean_trips, parse_timestamp, segment_speeds, split_stays, CleanTrip, CleaningParams, StayParams, TrackPoint,
};
use streetfuel::matching::Matcher;
use streetfuel::network::{Edge, Node, RoadNetwork};
use streetfuel::profiles::{features, FeatureTable, ProfileFeatures};
use streetfuel::synthetic::{
    cruise_track, delete_points, drive, grid_network, random_route, random_stops, raw_trip, sample, teleport_point,
    City, CitySpec, GridSpec, Kinematics,
};

const GALLON_L: f64 = 3.78541;
const MILE_KM: f64 = 1.609344;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Fuel for features `[t_idle, t_move, accel, km]` under indices `k`, written out term by term.
fn eq1(k: &[f64; 4], t_idle: f64, t_move: f64, accel: f64, km: f64) -> f64 {
    let mut total = 0.0;
    total += k[0] * t_idle;
    total += k[1] * t_move;
    total += k[2] * accel;
    total += k[3] * km;
    total
}

fn calibrated_fleet() -> Fleet {
    let mut fleet = Fleet::with_distribution(&[(7, 1.0)]).unwrap();
    calibrate(&mut fleet, &DriveCycle::ftp75(), &CalibrationOptions::default()).unwrap();
    fleet
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let cycle = DriveCycle::ftp75();
    let mut fleet = Fleet::with_distribution(&[(7, 1.0)]).unwrap();
    calibrate(&mut fleet, &cycle, &CalibrationOptions::default()).unwrap();
    // Independent features of the cycle: trapezoidal distance, idle seconds
    // where the segment mean speed is under 0.3 m/s, |Δv|·v̄ per segment.
    let (mut km, mut idle, mut accel) = (0.0, 0.0, 0.0);
    for w in cycle.samples.windows(2) {
        let (dt, vbar) = (w[1].0 - w[0].0, 0.5 * (w[0].1 + w[1].1));
        km += vbar * dt / 1000.0;
        if vbar < 0.3 {
            idle += dt;
        }
        accel += (w[1].1 - w[0].1).abs() * vbar;
    }
    let duration = cycle.samples.last().unwrap().0 - cycle.samples[0].0;
    let mut worst: f64 = 0.0;
    for bin in &fleet.bins {
        let liters = eq1(bin.k().unwrap(), idle, duration - idle, accel, km);
        let mpg = (km / MILE_KM) / (liters / GALLON_L);
        worst = worst.max(rel(mpg, bin.target_mpg));
    }
    let elapsed = started.elapsed();
    outcome(
        fleet.bins.len() == 14 && worst <= 1e-6 && elapsed < Duration::from_secs(1),
        format!("14 bins, worst relative error {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

/// `∫|a| dx` by splitting every segment into 100 linear sub-steps.
fn upsampled_accel(samples: &[(f64, f64)]) -> f64 {
    let mut total = 0.0;
    for w in samples.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        let h = (t1 - t0) / 100.0;
        for j in 0..100 {
            let a = v0 + (v1 - v0) * j as f64 / 100.0;
            let b = v0 + (v1 - v0) * (j + 1) as f64 / 100.0;
            let accel = (b - a) / h;
            let dx = 0.5 * (a + b) * h;
            total += accel.abs() * dx;
        }
    }
    total
}

fn random_profile(rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let n = rng.random_range(2..60);
    let mut t = rng.random_range(0.0..1e5);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let v = if rng.random_bool(0.2) { rng.random_range(0.0..0.4) } else { rng.random_range(0.0..30.0) };
        out.push((t, v));
        t += rng.random_range(0.2..5.0);
    }
    out
}

fn criterion_2() -> Outcome {
    let started = Instant::now();
    let fleet = calibrated_fleet();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let samples = random_profile(&mut rng);
        let bin = &fleet.bins[rng.random_range(0..14)];
        let fc = streetsmart_fc(&features(&samples, 0.3).unwrap(), bin).unwrap();

        let mut idle = 0.0;
        let mut km = 0.0;
        for w in samples.windows(2) {
            let dt = w[1].0 - w[0].0;
            let mean = (w[0].1 + w[1].1) / 2.0;
            if mean < 0.3 {
                idle += dt;
            }
            km += mean * dt / 1000.0;
        }
        let duration = samples.last().unwrap().0 - samples[0].0;
        let oracle = eq1(bin.k().unwrap(), idle, duration - idle, upsampled_accel(&samples), km);
        worst = worst.max(if oracle == 0.0 { fc.abs() } else { rel(fc, oracle) });
    }
    let elapsed = started.elapsed();
    outcome(
        worst <= 1e-6 && elapsed < Duration::from_secs(10),
        format!("1000 profiles, worst relative error {worst:.2e}, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn criterion_3() -> Outcome {
    let fleet = calibrated_fleet();
    let net = grid_network(&GridSpec::square(10, 150.0)).unwrap();
    let kin = Kinematics { stop_probability: 0.4, ..Kinematics::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut profiles = Vec::new();
    while profiles.len() < 250 {
        let Some(route) = random_route(&net, &mut rng, 600.0, 1500.0) else { continue };
        let stops = random_stops(&net, &route, &kin, &mut rng);
        let track = drive(&net, &route, &stops, &kin);
        let speeds: Vec<(f64, f64)> = track.iter().map(|s| (s.t, s.speed)).collect();
        // 45 s slices of the drive
        for chunk in speeds.chunks(45).filter(|c| c.len() > 2) {
            let acc: Vec<f64> = chunk.windows(2).map(|w| w[1].1 - w[0].1).collect();
            let mean = acc.iter().sum::<f64>() / acc.len() as f64;
            let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / acc.len() as f64;
            if var > 0.0 {
                profiles.push(chunk.to_vec());
            }
        }
    }
    let mut cases = 0;
    let mut holds = 0;
    for p in &profiles {
        let f = features(p, 0.3).unwrap();
        let flat = ProfileFeatures::constant_speed(f.t_move, f.length);
        for bin in &fleet.bins {
            cases += 1;
            holds += (streetsmart_fc(&f, bin).unwrap() > streetsmart_fc(&flat, bin).unwrap()) as usize;
        }
    }
    outcome(
        cases >= 200 && holds == cases,
        format!("{holds}/{cases} cases ({} profiles × 14 bins)", profiles.len()),
    )
}

fn criterion_4() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let start = parse_timestamp("2016-05-24T08:00:00Z").unwrap();
    let mut raws = Vec::new();
    let mut truth = Vec::new();
    for i in 0..500 {
        let n = rng.random_range(30..60);
        let origin = destination(LatLon::new(24.7, 46.7), rng.random_range(0.0..360.0), rng.random_range(0.0..5000.0));
        let (mut pts, speed) = cruise_track(&mut rng, origin, n, 10.0);
        let case_a = i % 2 == 0;
        if case_a {
            // enough points missing that the gap is unmistakably too fast
            let k = (2..=4).find(|&k| (k + 1) as f64 * speed >= 55.0).unwrap();
            delete_points(&mut pts, rng.random_range(5..n - 10), k);
        } else {
            let j = rng.random_range(3..n - 3);
            teleport_point(&mut pts, j, rng.random_range(0.0..360.0), rng.random_range(1000.0..1500.0));
        }
        let mut trip = raw_trip(format!("g{i}"), start, 10.0, pts);
        trip.dropoff = start + chrono::Duration::seconds(10 * (n as i64 - 1));
        raws.push(trip);
        truth.push((case_a, n));
    }
    let (clean, report) = clean_trips(&raws, 0, &CleaningParams::default());
    let by_id: HashMap<&str, &CleanTrip> = clean.iter().map(|t| (t.trip_id.as_str(), t)).collect();
    let mut compliant = true;
    let mut exact = 0;
    for (raw, &(case_a, n)) in raws.iter().zip(&truth) {
        let Some(t) = by_id.get(raw.trip_id.as_str()) else {
            compliant = false;
            continue;
        };
        compliant &= segment_speeds(t).iter().all(|&v| v * 3.6 <= 160.0);
        let slots = t.points.last().unwrap().slot as usize + 1;
        let points = if case_a { n } else { n - 1 };
        let interval_ok = (t.interval - 10.0).abs() < 1e-6;
        exact += (slots == n && t.points.len() == points && interval_ok) as usize;
    }
    let frac = exact as f64 / raws.len() as f64;
    let elapsed = started.elapsed();
    outcome(
        compliant && clean.len() == 500 && frac >= 0.95 && elapsed < Duration::from_secs(10),
        format!(
            "{} trips kept, speed bound {}, exact counts {exact}/500, {} case A / {} case B repairs, {:.2} s",
            clean.len(),
            if compliant { "held" } else { "violated" },
            report.case_a_repairs,
            report.case_b_repairs,
            elapsed.as_secs_f64()
        ),
    )
}

/// Moving, then `still` seconds at one spot (the middle point displaced by
/// `offset_m`), then moving again; 1 s sampling.
fn stay_fixture(still: u32, offset_m: f64) -> CleanTrip {
    let a = LatLon::new(24.7, 46.7);
    let mut points = Vec::new();
    let mut slot = 0;
    for i in 0..30 {
        points.push(TrackPoint { slot, pos: destination(a, 90.0, i as f64 * 12.0) });
        slot += 1;
    }
    let park = destination(a, 90.0, 30.0 * 12.0);
    for k in 0..=still {
        let pos = if k == still / 2 { destination(park, 0.0, offset_m) } else { park };
        points.push(TrackPoint { slot, pos });
        slot += 1;
    }
    for i in 1..30 {
        points.push(TrackPoint { slot, pos: destination(park, 90.0, i as f64 * 12.0) });
        slot += 1;
    }
    CleanTrip {
        trip_id: "s".into(),
        parent_trip: None,
        start: parse_timestamp("2016-05-24T08:00:00Z").unwrap(),
        interval: 1.0,
        points,
    }
}

fn criterion_5() -> Outcome {
    let p = StayParams::default();
    let cases = [
        ("2199 s", split_stays(&stay_fixture(2199, 0.0), &p).len(), 1),
        ("2201 s", split_stays(&stay_fixture(2201, 0.0), &p).len(), 2),
        ("9.9 m", split_stays(&stay_fixture(3000, 9.9), &p).len(), 2),
        ("10.1 m", split_stays(&stay_fixture(3000, 10.1), &p).len(), 1),
    ];
    let ok = cases.iter().filter(|c| c.1 == c.2).count();
    let detail = cases.iter().map(|c| format!("{}→{} piece(s)", c.0, c.1)).collect::<Vec<_>>().join(", ");
    outcome(ok == 4, format!("{ok}/4 ({detail})"))
}

fn criterion_6() -> Outcome {
    let net = grid_network(&GridSpec::square(20, 150.0)).unwrap();
    let dense = net.densify(10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kin = Kinematics::default();
    let start = parse_timestamp("2016-05-24T08:00:00Z").unwrap();
    let mut trips = Vec::new();
    let mut routes = Vec::new();
    while trips.len() < 200 {
        let Some(route) = random_route(&net, &mut rng, 800.0, 2500.0) else { continue };
        let stops = random_stops(&net, &route, &kin, &mut rng);
        let track = drive(&net, &route, &stops, &kin);
        let pts = sample(&track, 5, 5.0, &mut rng);
        let n = pts.len();
        let raw = raw_trip(format!("m{}", trips.len()), start, 5.0, pts);
        let clean = CleanTrip {
            trip_id: raw.trip_id.clone(),
            parent_trip: None,
            start,
            interval: 5.0,
            points: raw.points.iter().enumerate().map(|(i, &pos)| TrackPoint { slot: i as u32, pos }).collect(),
        };
        assert_eq!(clean.len(), n);
        trips.push(clean);
        routes.push(route);
    }
    let started = Instant::now();
    let mut matcher = Matcher::new(&dense, Default::default());
    let matched: Vec<_> = trips.iter().map(|t| matcher.match_trip(t).collapse_to_parents(&dense)).collect();
    let elapsed = started.elapsed();

    let (mut found, mut total, mut violations) = (0, 0, 0);
    for (m, truth) in matched.iter().zip(&routes) {
        let got: std::collections::BTreeSet<u64> = m.segments.iter().map(|s| s.edge).collect();
        for &e in truth {
            total += 1;
            found += got.contains(&net.edges()[e].id) as usize;
        }
        violations += m.connectivity_violations(&net);
    }
    let recall = found as f64 / total as f64;
    outcome(
        recall >= 0.95 && violations == 0 && elapsed < Duration::from_secs(60),
        format!(
            "edge recovery {found}/{total} = {:.4}, {violations} connectivity violations, {:.2} s single-threaded",
            recall,
            elapsed.as_secs_f64()
        ),
    )
}

fn fixture_network(edges: &[(u64, u64, u64, f64, f64)], nodes: &[u64]) -> RoadNetwork {
    let origin = LatLon::new(24.7, 46.7);
    RoadNetwork::new(
        nodes.iter().map(|&id| Node { id, position: destination(origin, 90.0, id as f64 * 50.0) }).collect(),
        edges
            .iter()
            .map(|&(id, from, to, secs, capacity)| Edge {
                id,
                from,
                to,
                length: secs * 10.0,
                free_flow_speed: 10.0,
                capacity,
                parent: id,
            })
            .collect(),
    )
    .unwrap()
}

fn criterion_7(city: Option<&CityRun>) -> Outcome {
    // Direct edge 1 (10 s, capacity 500) against edges 2+3 (5.5 s each, capacity 10,000).
    let net = fixture_network(&[(1, 1, 2, 10.0, 500.0), (2, 1, 3, 5.5, 10_000.0), (3, 3, 2, 5.5, 10_000.0)], &[1, 2, 3]);
    let od = OdMatrix::new("am", vec![OdEntry { origin: 1, dest: 2, demand: 1000.0 }]).unwrap();
    let a = ita_assign(&net, &od, &AssignParams::default()).unwrap();
    let bpr = |t0: f64, v: f64, c: f64| t0 * (1.0 + 0.15 * (v / c).powi(4));
    // Hand trace: 400 → direct (10 < 11); t1 = 10.6144 < 11 so 300 → direct;
    // t1 = 15.7624 > 11 so 200 and then 100 take the detour.
    let expected_flows = [[400.0, 0.0, 0.0], [700.0, 0.0, 0.0], [700.0, 200.0, 200.0], [700.0, 300.0, 300.0]];
    let mut cumulative = [0.0; 3];
    let mut trace_ok = a.ledger.len() == 4 && a.history.len() == 4;
    for (k, p) in a.ledger.iter().enumerate().take(4) {
        for &e in &p.edges {
            cumulative[e] += p.flow;
        }
        trace_ok &= cumulative.iter().zip(&expected_flows[k]).all(|(x, y)| (x - y).abs() < 1e-9);
        let times = [
            bpr(10.0, expected_flows[k][0], 500.0),
            bpr(5.5, expected_flows[k][1], 10_000.0),
            bpr(5.5, expected_flows[k][2], 10_000.0),
        ];
        trace_ok &= a.history[k].iter().zip(&times).all(|(x, y)| (x - y).abs() < 1e-9);
    }
    trace_ok &= (a.history[0][0] - 10.6144).abs() < 1e-9 && (a.history[1][0] - 15.7624).abs() < 1e-9;

    // Conservation with an unreachable pair and a same-node pair.
    let net2 = fixture_network(
        &[(1, 1, 2, 10.0, 500.0), (2, 1, 3, 5.5, 100.0), (3, 3, 2, 5.5, 100.0), (4, 2, 1, 10.0, 500.0), (5, 9, 10, 3.0, 50.0)],
        &[1, 2, 3, 9, 10],
    );
    let od2 = OdMatrix::new(
        "am",
        vec![
            OdEntry { origin: 1, dest: 2, demand: 333.3 },
            OdEntry { origin: 2, dest: 3, demand: 17.0 },
            OdEntry { origin: 1, dest: 9, demand: 5.5 },
        ],
    )
    .unwrap();
    let mut fixtures = vec![(od.total_demand(), a.assigned_demand, a.dropped_demand)];
    let b = ita_assign(&net2, &od2, &AssignParams::default()).unwrap();
    fixtures.push((od2.total_demand(), b.assigned_demand, b.dropped_demand));
    let mut conserved = b.dropped_demand == 5.5 && b.unreachable_pairs == 1;
    if let Some(run) = city {
        for (label, od) in &run.city.od {
            let w = run.config_window(label);
            let scaled = od.peak_scale(w).unwrap();
            let r = ita_assign(&run.city.network, &scaled, &AssignParams::default()).unwrap();
            fixtures.push((scaled.total_demand(), r.assigned_demand, r.dropped_demand));
        }
    } else {
        conserved = false;
    }
    for &(total, assigned, dropped) in &fixtures {
        conserved &= (assigned - (total - dropped)).abs() <= 1e-9 * total.max(1.0);
    }
    outcome(
        trace_ok && conserved,
        format!(
            "diversion trace {}, conservation {} on {} fixtures",
            if trace_ok { "matches" } else { "differs" },
            if conserved { "exact" } else { "broken" },
            fixtures.len()
        ),
    )
}

struct CityRun {
    dir: tempfile::TempDir,
    city: City,
    runs: Vec<Duration>,
}

impl CityRun {
    fn out(&self, k: usize) -> std::path::PathBuf {
        self.dir.path().join(format!("out{k}"))
    }

    fn config_window(&self, label: &str) -> f64 {
        self.city.config().windows.iter().find(|w| w.label == label).unwrap().peak_factor
    }
}

fn run_city() -> CityRun {
    let dir = tempfile::tempdir().unwrap();
    let city = City::generate(&CitySpec::default()).unwrap();
    city.write(dir.path()).unwrap();
    let mut runs = Vec::new();
    for k in 0..2 {
        let started = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_streetfuel"))
            .args(["all", "--threads", "1", "--config"])
            .arg(dir.path().join("streetfuel.toml"))
            .arg("--out")
            .arg(dir.path().join(format!("out{k}")))
            .env("RUST_LOG", "warn")
            .status()
            .unwrap();
        assert!(status.success(), "run {k}: {status}");
        runs.push(started.elapsed());
    }
    CityRun { dir, city, runs }
}

fn read_csv_rows(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let headers = r.headers().unwrap().clone();
    r.records()
        .map(|rec| headers.iter().zip(rec.unwrap().iter()).map(|(h, v)| (h.to_string(), v.to_string())).collect())
        .collect()
}

fn criterion_8(run: &CityRun) -> Outcome {
    let out = run.out(0);
    // Fleet-weighted indices, by hand from the distribution and the calibrated model.
    let probs: HashMap<u8, f64> = read_csv_rows(&run.dir.path().join("fleet.csv"))
        .iter()
        .map(|r| (r["bin_id"].parse().unwrap(), r["probability"].parse().unwrap()))
        .collect();
    let mut k = [0.0; 4];
    for r in read_csv_rows(&out.join("calibrated_model.csv")) {
        let p = probs.get(&r["bin_id"].parse::<u8>().unwrap()).copied().unwrap_or(0.0);
        for (i, key) in ["k1", "k2", "k3", "k4"].iter().enumerate() {
            k[i] += p * r[*key].parse::<f64>().unwrap();
        }
    }
    let table = FeatureTable::read_csv(&out.join("edge_features.csv")).unwrap();
    let mut worst: f64 = 0.0;
    let mut windows = 0;
    for (label, _) in &run.city.od {
        let Some(feats) = table.window(label) else { continue };
        let fcr: HashMap<u64, f64> = feats
            .iter()
            .map(|(&e, f)| (e, eq1(&k, f.mean.t_idle, f.mean.t_move, f.mean.accel_integral, f.mean.length)))
            .collect();
        // Per-trip ledger: every routed path's flow times the fuel of its profiled edges.
        let mut ledger = 0.0;
        for r in read_csv_rows(&out.join(format!("paths_{label}.csv"))) {
            let flow: f64 = r["flow_vph"].parse().unwrap();
            let per_car: f64 = r["edge_ids"]
                .split_whitespace()
                .filter_map(|e| fcr.get(&e.parse::<u64>().unwrap()))
                .sum();
            ledger += flow * per_car;
        }
        // Map side: Σ rate × length over the exported layer.
        let text = std::fs::read_to_string(out.join(format!("fuel_map_{label}.geojson"))).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        let mut map_total = 0.0;
        for f in doc["features"].as_array().unwrap() {
            let id = f["properties"]["edge_id"].as_u64().unwrap();
            let length = run.city.network.edge(id).unwrap().length;
            map_total += f["properties"]["rate"].as_f64().unwrap() * length;
        }
        worst = worst.max(rel(map_total, ledger));
        windows += 1;
    }
    outcome(windows == 3 && worst <= 1e-6, format!("{windows} windows, worst relative gap {worst:.2e}"))
}

fn criterion_9(run: &CityRun) -> Outcome {
    let rows = read_csv_rows(&run.out(0).join("savings_curves.csv"));
    let mut curves: BTreeMap<String, BTreeMap<String, (f64, f64, f64)>> = BTreeMap::new();
    for r in &rows {
        let f: f64 = r["fraction_removed"].parse().unwrap();
        curves.entry(r["strategy"].clone()).or_default().insert(
            r["fraction_removed"].clone(),
            (f, r["fuel_saved_fraction"].parse().unwrap(), r["stddev"].parse().unwrap()),
        );
    }
    let seeds = run.city.config().scenario.seeds as f64;
    let random = &curves["random"];
    let profile = &curves["targeted_profile"];
    let mut linear = true;
    let mut worst_z: f64 = 0.0;
    for &(f, saved, sd) in random.values() {
        // three standard errors of the mean over the seeds
        let sigma = sd / seeds.sqrt();
        let ok = (saved - f).abs() <= 3.0 * sigma + 1e-12;
        linear &= ok;
        if sigma > 0.0 {
            worst_z = worst_z.max((saved - f).abs() / sigma);
        }
    }
    let dominant = random.iter().all(|(key, r)| profile.get(key).is_some_and(|p| p.1 >= r.1 - 1e-12));
    let at = |c: &BTreeMap<String, (f64, f64, f64)>| c.values().find(|v| (v.0 - 0.145).abs() < 1e-12).map(|v| v.1);
    let (r145, p145) = (at(random).unwrap_or(f64::NAN), at(profile).unwrap_or(f64::NAN));
    let bins_used = read_csv_rows(&run.out(0).join("scenario_trips.csv"))
        .iter()
        .map(|r| r["bin_id"].clone())
        .collect::<std::collections::BTreeSet<_>>()
        .len();
    let strict = p145 > r145 && bins_used > 1;
    outcome(
        linear && dominant && strict,
        format!(
            "random within 3σ at {} fractions (worst {worst_z:.2}σ), targeted_profile ≥ random {}, at 0.145: {p145:.4} vs {r145:.4} over {bins_used} bins",
            random.len(),
            if dominant { "everywhere" } else { "violated" }
        ),
    )
}

fn criterion_10(run: &CityRun) -> Outcome {
    let (a, b) = (run.out(0), run.out(1));
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    let mut differing = Vec::new();
    for n in &names {
        if std::fs::read(a.join(n)).unwrap() != std::fs::read(b.join(n)).ok().unwrap_or_default() {
            differing.push(n.to_string_lossy().to_string());
        }
    }
    let count = std::fs::read_dir(&b).unwrap().count();
    let edges = run.city.network.edge_count();
    let trips = read_csv_rows(&a.join("scenario_trips.csv")).len();
    let slowest = run.runs.iter().max().unwrap().as_secs_f64();
    outcome(
        differing.is_empty() && count == names.len() && slowest < 60.0 && edges >= 5000 && trips >= 10_000,
        format!(
            "{edges} edges, {trips} trips, 3 windows; {} files, {} differing; runs {:.1} s / {:.1} s single-threaded",
            names.len(),
            differing.len(),
            run.runs[0].as_secs_f64(),
            run.runs[1].as_secs_f64()
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        }
    }
}

fn main() {
    let city = catch_unwind(run_city).ok();
    let no_city = || outcome(false, "synthetic city run failed");
    let results = [
        ("calibration fixpoint", guarded(criterion_1)),
        ("StreetSmart oracle", guarded(criterion_2)),
        ("stop-and-go direction", guarded(criterion_3)),
        ("GPS repair", guarded(criterion_4)),
        ("stay thresholds", guarded(criterion_5)),
        ("map matching", guarded(criterion_6)),
        ("incremental assignment", guarded(|| criterion_7(city.as_ref()))),
        ("fuel-rate ledger", city.as_ref().map_or_else(no_city, |c| guarded(|| criterion_8(c)))),
        ("savings linearity and dominance", city.as_ref().map_or_else(no_city, |c| guarded(|| criterion_9(c)))),
        ("end-to-end determinism and scale", city.as_ref().map_or_else(no_city, |c| guarded(|| criterion_10(c)))),
    ];
    let mut failed = 0;
    for (i, (name, o)) in results.iter().enumerate() {
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += !o.pass as usize;
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
