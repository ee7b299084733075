//! Discrete-trip simulation and trip-reduction policies.
//!
//! Every OD pair with at least one car per hour becomes `⌊demand⌋` trips routed
//! on the congested fastest path. Trips draw a fuel-economy bin from the fleet
//! and are priced edge by edge with mean profile features, and once more with
//! the constant-speed baseline.

mod savings;
mod verification;

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, weighted::WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::OdMatrix;
use crate::error::{Error, Result};
use crate::fuel::{doe_baseline_fc, fc_with, DoeCurve, Fleet};
use crate::network::{EdgeId, NodeId, RoadNetwork, Router, SearchLimits};
use crate::profiles::{EdgeFeatures, ProfileFeatures};

pub use savings::{savings_curve, write_curves, Normalization, SavingsCurve, SavingsParams, SavingsPoint, Strategy};
pub use verification::{histogram, overlap, verification_reports, Histogram, VerificationSummary};

#[derive(Debug, Clone, PartialEq)]
pub struct TripRecord {
    pub trip_id: u64,
    pub origin: NodeId,
    pub dest: NodeId,
    /// Edge ids from origin to destination.
    pub path: Vec<EdgeId>,
    pub bin_id: u8,
    pub fuel_profile: f64,
    pub fuel_constant: f64,
    pub travel_time_profile: f64,
    /// Congested travel time from the assignment, seconds.
    pub travel_time_simulated: f64,
    /// Meters.
    pub distance: f64,
    pub fuel_per_meter: f64,
    /// Summed per-edge features along the path.
    pub features: ProfileFeatures,
    /// At least one path edge had no profile and was priced at free-flow speed.
    pub flagged: bool,
}

impl TripRecord {
    pub fn constant_per_meter(&self) -> f64 {
        self.fuel_constant / self.distance
    }
}

/// One trip per whole car/hour of each OD pair, routed on `congested_times`
/// (indexed like the network's edges). Unreachable and same-node pairs are skipped.
pub fn enumerate_trips(network: &RoadNetwork, od: &OdMatrix, congested_times: &[f64]) -> Result<Vec<TripRecord>> {
    if congested_times.len() != network.edge_count() {
        return Err(Error::InvalidInput(format!(
            "{} congested times for {} edges",
            congested_times.len(),
            network.edge_count()
        )));
    }
    let mut by_origin: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (k, e) in od.entries.iter().enumerate() {
        if e.demand < 1.0 || e.origin == e.dest {
            continue;
        }
        let (Some(o), Some(d)) = (network.node_idx(e.origin), network.node_idx(e.dest)) else {
            return Err(Error::InvalidInput(format!("OD pair {} -> {} references unknown nodes", e.origin, e.dest)));
        };
        by_origin.entry(o).or_default().push((k, d));
    }
    let groups: Vec<_> = by_origin.into_iter().collect();
    let routed: HashMap<usize, Option<(Vec<usize>, f64)>> = groups
        .par_iter()
        .map_init(
            || Router::new(network),
            |router, (o, dests)| {
                let targets: Vec<usize> = dests.iter().map(|d| d.1).collect();
                router.run(network, *o, congested_times, &SearchLimits::to_targets(&targets));
                dests
                    .iter()
                    .map(|&(k, d)| (k, router.route_to(network, d).map(|r| (r.edges, r.time))))
                    .collect::<Vec<_>>()
            },
        )
        .flatten()
        .collect();

    let mut trips = Vec::new();
    let mut skipped = 0usize;
    for (k, e) in od.entries.iter().enumerate() {
        let Some(route) = routed.get(&k) else { continue };
        let Some((edges, time)) = route else {
            skipped += 1;
            log::warn!("OD pair {} -> {} unreachable; {} trips skipped", e.origin, e.dest, e.demand.floor());
            continue;
        };
        let path = network.edge_ids(edges);
        let distance = edges.iter().map(|&i| network.edges()[i].length).sum();
        for _ in 0..e.demand.floor() as u64 {
            trips.push(TripRecord {
                trip_id: trips.len() as u64,
                origin: e.origin,
                dest: e.dest,
                path: path.clone(),
                bin_id: 0,
                fuel_profile: 0.0,
                fuel_constant: 0.0,
                travel_time_profile: 0.0,
                travel_time_simulated: *time,
                distance,
                fuel_per_meter: 0.0,
                features: ProfileFeatures::default(),
                flagged: false,
            });
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} unreachable OD pairs skipped");
    }
    Ok(trips)
}

/// Independent categorical bin draws in trip order from a seeded generator.
pub fn assign_bins(trips: &mut [TripRecord], fleet: &Fleet, seed: u64) -> Result<()> {
    fleet.validate()?;
    let ids: Vec<u8> = fleet.bins.iter().map(|b| b.id).collect();
    let dist = WeightedIndex::new(fleet.bins.iter().map(|b| b.probability))
        .map_err(|e| Error::InvalidInput(format!("fleet distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in trips {
        t.bin_id = ids[dist.sample(&mut rng)];
    }
    Ok(())
}

/// Prices every trip with mean profile features per edge (`features`, keyed
/// by edge id) and with the constant-speed baseline.
pub fn price_trips(
    trips: &mut [TripRecord],
    network: &RoadNetwork,
    features: Option<&BTreeMap<EdgeId, EdgeFeatures>>,
    fleet: &Fleet,
    doe: &DoeCurve,
) -> Result<()> {
    let ks: HashMap<u8, [f64; 4]> = fleet
        .bins
        .iter()
        .filter_map(|b| b.k.map(|k| (b.id, k)))
        .collect();
    trips.par_iter_mut().try_for_each(|t| {
        let k = ks.get(&t.bin_id).ok_or(Error::Uncalibrated(t.bin_id))?;
        let mut sum = ProfileFeatures::default();
        let mut flagged = false;
        for id in &t.path {
            let edge = network
                .edge(*id)
                .ok_or_else(|| Error::InvalidInput(format!("trip {} uses unknown edge {id}", t.trip_id)))?;
            let f = match features.and_then(|m| m.get(id)) {
                Some(ef) => ef.mean,
                None => {
                    flagged = true;
                    ProfileFeatures::constant_speed(edge.free_flow_time(), edge.length / 1000.0)
                }
            };
            sum = sum.add(&f);
        }
        t.features = sum;
        t.flagged = flagged;
        t.fuel_profile = fc_with(k, &sum);
        t.travel_time_profile = sum.duration();
        t.fuel_constant = doe_baseline_fc(t.distance / t.travel_time_simulated, t.distance / 1000.0, doe)?;
        t.fuel_per_meter = t.fuel_profile / t.distance;
        Ok(())
    })
}

/// Pearson correlation; `None` when either series has zero variance.
pub fn correlation(pairs: &[(f64, f64)]) -> Option<f64> {
    let n = pairs.len() as f64;
    if pairs.len() < 2 {
        return None;
    }
    let (mx, my) = pairs.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    (sxx > 0.0 && syy > 0.0).then(|| sxy / (sxx * syy).sqrt())
}

/// `(travel_time_simulated, travel_time_profile)` per trip and their correlation.
pub fn compare_travel_times(trips: &[TripRecord]) -> (Vec<(f64, f64)>, Option<f64>) {
    let pairs: Vec<(f64, f64)> = trips.iter().map(|t| (t.travel_time_simulated, t.travel_time_profile)).collect();
    let r = if pairs.iter().all(|p| p.0 == p.1) && pairs.len() >= 2 { Some(1.0) } else { correlation(&pairs) };
    (pairs, r)
}

#[derive(Debug, Serialize, Deserialize)]
struct TripRow {
    trip_id: u64,
    origin: NodeId,
    dest: NodeId,
    bin_id: u8,
    distance_m: f64,
    fuel_profile_l: f64,
    fuel_constant_l: f64,
    time_sim_s: f64,
    time_profile_s: f64,
    flagged: bool,
}

/// Writes `trip_id,origin,dest,bin_id,distance_m,fuel_profile_l,fuel_constant_l,time_sim_s,time_profile_s,flagged`.
pub fn write_trips(path: &Path, trips: &[TripRecord]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    for t in trips {
        w.record(TripRow {
            trip_id: t.trip_id,
            origin: t.origin,
            dest: t.dest,
            bin_id: t.bin_id,
            distance_m: t.distance,
            fuel_profile_l: t.fuel_profile,
            fuel_constant_l: t.fuel_constant,
            time_sim_s: t.travel_time_simulated,
            time_profile_s: t.travel_time_profile,
            flagged: t.flagged,
        })?;
    }
    w.finish()
}

/// Writes `trip_id,time_sim_s,time_profile_s`.
pub fn write_travel_times(path: &Path, trips: &[TripRecord]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    w.row(["trip_id", "time_sim_s", "time_profile_s"])?;
    for t in trips {
        w.row([t.trip_id.to_string(), t.travel_time_simulated.to_string(), t.travel_time_profile.to_string()])?;
    }
    w.finish()
}
