//! Histogram tables used to sanity-check pipeline artifacts.

use std::path::Path;

use super::TripRecord;
use crate::error::Result;
use crate::fuel::{fc_with, Fleet};
use crate::ingest::RawTrip;
use crate::matching::MatchSummary;
use crate::profiles::ProfileFeatures;

/// Shared bins over several series.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub edges: Vec<f64>,
    /// `counts[series][bin]`.
    pub counts: Vec<Vec<usize>>,
}

impl Histogram {
    pub fn totals(&self) -> Vec<usize> {
        self.counts.iter().map(|c| c.iter().sum()).collect()
    }

    fn write(&self, path: &Path, unit: &str, names: &[&str]) -> Result<()> {
        let mut w = crate::io::csv_writer(path)?;
        let header: Vec<String> = [format!("bin_lo_{unit}"), format!("bin_hi_{unit}")]
            .into_iter()
            .chain(names.iter().map(|s| s.to_string()))
            .collect();
        w.row(&header)?;
        for b in 0..self.edges.len().saturating_sub(1) {
            let row: Vec<String> = [self.edges[b].to_string(), self.edges[b + 1].to_string()]
                .into_iter()
                .chain(self.counts.iter().map(|c| c[b].to_string()))
                .collect();
            w.row(&row)?;
        }
        w.finish()
    }
}

/// `bins` equal-width bins spanning every finite value of every series.
pub fn histogram(series: &[&[f64]], bins: usize) -> Histogram {
    let finite = series.iter().flat_map(|s| s.iter()).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let bins = bins.max(1);
    let (lo, hi) = if lo > hi { (0.0, 1.0) } else if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let counts = series
        .iter()
        .map(|s| {
            let mut c = vec![0; bins];
            for v in s.iter().filter(|v| v.is_finite()) {
                c[(((v - lo) / width) as usize).min(bins - 1)] += 1;
            }
            c
        })
        .collect();
    Histogram { edges, counts }
}

/// Shared mass of two normalised count series, in [0, 1].
pub fn overlap(a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter().zip(b).map(|(&x, &y)| (x as f64 / na).min(y as f64 / nb)).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationSummary {
    pub distance_overlap: f64,
    /// Fully matched trips compared on time.
    pub matched_trips: usize,
    /// Share of those whose free-flow time does not exceed the observed time.
    pub free_flow_not_slower: f64,
    /// Trips in each fuel-economy histogram.
    pub fuel_economy_counts: [usize; 4],
}

const BINS: usize = 30;

/// Writes `distance_histogram.csv`, `travel_time_histogram.csv` and
/// `fuel_economy_histogram.csv` into `dir`.
///
/// Fuel economy (km/L) is estimated four ways per trip: the constant-speed
/// equivalent of its path (same distance and travel time, no idling or
/// acceleration) or its profile features, each under the most common bin
/// alone or under the trip's drawn bin.
pub fn verification_reports(
    dir: &Path,
    trips: &[TripRecord],
    raw: &[RawTrip],
    matches: &[MatchSummary],
    fleet: &Fleet,
) -> Result<VerificationSummary> {
    let reported: Vec<f64> = raw.iter().map(|t| t.reported_length).collect();
    let computed: Vec<f64> = raw.iter().map(RawTrip::polyline_length_km).collect();
    let h = histogram(&[&reported, &computed], BINS);
    h.write(&dir.join("distance_histogram.csv"), "km", &["reported", "computed"])?;
    let distance_overlap = overlap(&h.counts[0], &h.counts[1]);

    let matched: Vec<&MatchSummary> = matches.iter().filter(|m| m.matched).collect();
    let free: Vec<f64> = matched.iter().map(|m| m.free_flow_s).collect();
    let observed: Vec<f64> = matched.iter().map(|m| m.observed_s).collect();
    histogram(&[&free, &observed], BINS).write(&dir.join("travel_time_histogram.csv"), "s", &["free_flow", "observed"])?;
    let not_slower = matched.iter().filter(|m| m.free_flow_s <= m.observed_s).count();
    let free_flow_not_slower = if matched.is_empty() { 0.0 } else { not_slower as f64 / matched.len() as f64 };

    let reference = fleet.reference_bin().k()?;
    let mut series: [Vec<f64>; 4] = Default::default();
    for t in trips {
        let own = fleet.bin(t.bin_id).map(|b| b.k()).transpose()?.unwrap_or(reference);
        let km = t.distance / 1000.0;
        let flat = ProfileFeatures::constant_speed(t.travel_time_profile, t.features.length);
        for (s, (k, f)) in series.iter_mut().zip([(reference, &flat), (own, &flat), (reference, &t.features), (own, &t.features)]) {
            s.push(km / fc_with(k, f));
        }
    }
    let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
    let fe = histogram(&refs, BINS);
    fe.write(
        &dir.join("fuel_economy_histogram.csv"),
        "km_per_l",
        &["constant_1bin", "constant_allbins", "profile_1bin", "profile_allbins"],
    )?;
    let totals = fe.totals();
    Ok(VerificationSummary {
        distance_overlap,
        matched_trips: matched.len(),
        free_flow_not_slower,
        fuel_economy_counts: [totals[0], totals[1], totals[2], totals[3]],
    })
}
