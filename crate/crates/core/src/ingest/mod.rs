//! Raw taxi trips to cleaned, timestamped trajectories.
//!
//! Raw trips carry a pickup and dropoff time plus an untimed polyline. Points
//! are assumed to be sampled at a regular interval, so every cleaned point
//! sits on an integer *slot* of that interval. Removing an anomalous point
//! leaves its slot empty; re-inserting missed points adds slots and the
//! interval is re-inferred over the unchanged trip duration.

mod rates;
mod repair;
mod stays;

use std::path::Path;

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{haversine, BoundingBox, LatLon};

pub use rates::{hourly_trip_rates, CalendarTag, HourlyRates};
pub use repair::{repair_spikes, RepairOutcome, RepairParams, RepairStats};
pub use stays::{split_stays, StayParams};

/// Default spike threshold, km/h.
pub const DEFAULT_SPIKE_KMH: f64 = 160.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RawTrip {
    pub trip_id: String,
    pub pickup: DateTime<Utc>,
    pub dropoff: DateTime<Utc>,
    /// Kilometers, as reported by the operator.
    pub reported_length: f64,
    pub points: Vec<LatLon>,
}

impl RawTrip {
    pub fn duration(&self) -> f64 {
        (self.dropoff - self.pickup).num_nanoseconds().unwrap_or(i64::MAX) as f64 * 1e-9
    }

    /// Sum of haversine distances between consecutive points, kilometers.
    pub fn polyline_length_km(&self) -> f64 {
        self.points.windows(2).map(|w| haversine(w[0], w[1])).sum::<f64>() / 1000.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    /// Sample slot; the point was recorded `slot * interval` seconds after `start`.
    pub slot: u32,
    pub pos: LatLon,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanTrip {
    pub trip_id: String,
    pub parent_trip: Option<String>,
    /// Absolute time of the first point (slot 0).
    pub start: DateTime<Utc>,
    /// Seconds between consecutive slots.
    pub interval: f64,
    pub points: Vec<TrackPoint>,
}

/// Why a trip was rejected before or during cleaning.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rejection {
    Malformed,
    TooFewPoints,
    NonPositiveDuration,
    OutsideRegion,
    Unrepairable,
}

impl Rejection {
    pub fn label(&self) -> &'static str {
        match self {
            Rejection::Malformed => "rejected_malformed",
            Rejection::TooFewPoints => "rejected_too_few_points",
            Rejection::NonPositiveDuration => "rejected_nonpositive_duration",
            Rejection::OutsideRegion => "dropped_outside_region",
            Rejection::Unrepairable => "dropped_unrepairable",
        }
    }
}

/// Sampling interval: trip duration over the number of point-to-point steps.
pub fn infer_interval(trip: &RawTrip) -> std::result::Result<f64, Rejection> {
    if trip.points.len() < 2 {
        return Err(Rejection::TooFewPoints);
    }
    let duration = trip.duration();
    if !(duration > 0.0) {
        return Err(Rejection::NonPositiveDuration);
    }
    Ok(duration / (trip.points.len() - 1) as f64)
}

pub(crate) fn add_seconds(t: DateTime<Utc>, secs: f64) -> DateTime<Utc> {
    t + chrono::Duration::nanoseconds((secs * 1e9).round() as i64)
}

impl CleanTrip {
    pub fn from_raw(trip: &RawTrip) -> std::result::Result<Self, Rejection> {
        let interval = infer_interval(trip)?;
        Ok(Self {
            trip_id: trip.trip_id.clone(),
            parent_trip: None,
            start: trip.pickup,
            interval,
            points: trip
                .points
                .iter()
                .enumerate()
                .map(|(i, &pos)| TrackPoint { slot: i as u32, pos })
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Seconds from `start` to point `i`.
    pub fn offset(&self, i: usize) -> f64 {
        self.points[i].slot as f64 * self.interval
    }

    pub fn time(&self, i: usize) -> DateTime<Utc> {
        add_seconds(self.start, self.offset(i))
    }

    pub fn duration(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.slot as f64 * self.interval)
    }

    /// Shifts slots so the first point is slot 0, moving `start` accordingly.
    pub(crate) fn rebase(&mut self) {
        if let Some(first) = self.points.first().map(|p| p.slot) {
            if first > 0 {
                self.start = add_seconds(self.start, first as f64 * self.interval);
                for p in &mut self.points {
                    p.slot -= first;
                }
            }
        }
    }

    /// Distance of every point-to-point segment, meters.
    pub fn segment_distances(&self) -> Vec<f64> {
        self.points.windows(2).map(|w| haversine(w[0].pos, w[1].pos)).collect()
    }

    pub fn positions(&self) -> impl Iterator<Item = LatLon> + '_ {
        self.points.iter().map(|p| p.pos)
    }
}

/// Speed of every point-to-point segment, m/s.
pub fn segment_speeds(trip: &CleanTrip) -> Vec<f64> {
    trip.points
        .windows(2)
        .map(|w| haversine(w[0].pos, w[1].pos) / ((w[1].slot - w[0].slot) as f64 * trip.interval))
        .collect()
}

/// Keeps only trips whose every point lies inside `bbox`.
pub fn filter_region(trips: Vec<RawTrip>, bbox: &BoundingBox) -> Vec<RawTrip> {
    trips
        .into_iter()
        .filter(|t| t.points.iter().all(|p| bbox.contains(*p)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleaningParams {
    pub repair: RepairParams,
    pub stays: StayParams,
    pub region: Option<BoundingBox>,
}

impl Default for CleaningParams {
    fn default() -> Self {
        Self { repair: RepairParams::default(), stays: StayParams::default(), region: None }
    }
}

/// Per-category counts from a cleaning run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CleaningReport {
    pub input: u64,
    pub rejected_malformed: u64,
    pub rejected_too_few_points: u64,
    pub rejected_nonpositive_duration: u64,
    pub dropped_outside_region: u64,
    pub dropped_unrepairable: u64,
    pub trips_with_case_a: u64,
    pub trips_with_case_b: u64,
    pub case_a_repairs: u64,
    pub case_b_repairs: u64,
    pub points_inserted: u64,
    pub points_removed: u64,
    pub split_parents: u64,
    pub split_children: u64,
    pub stays_excised: u64,
    pub output: u64,
}

impl CleaningReport {
    fn reject(&mut self, r: Rejection) {
        match r {
            Rejection::Malformed => self.rejected_malformed += 1,
            Rejection::TooFewPoints => self.rejected_too_few_points += 1,
            Rejection::NonPositiveDuration => self.rejected_nonpositive_duration += 1,
            Rejection::OutsideRegion => self.dropped_outside_region += 1,
            Rejection::Unrepairable => self.dropped_unrepairable += 1,
        }
    }

    pub fn dropped(&self) -> u64 {
        self.rejected_malformed
            + self.rejected_too_few_points
            + self.rejected_nonpositive_duration
            + self.dropped_outside_region
            + self.dropped_unrepairable
    }

    /// `input - dropped - split_parents + split_children == output`.
    pub fn reconciles(&self) -> bool {
        self.input + self.split_children == self.output + self.dropped() + self.split_parents
    }

    pub fn rows(&self) -> Vec<(&'static str, u64)> {
        vec![
            ("input", self.input),
            ("rejected_malformed", self.rejected_malformed),
            ("rejected_too_few_points", self.rejected_too_few_points),
            ("rejected_nonpositive_duration", self.rejected_nonpositive_duration),
            ("dropped_outside_region", self.dropped_outside_region),
            ("dropped_unrepairable", self.dropped_unrepairable),
            ("trips_with_case_a", self.trips_with_case_a),
            ("trips_with_case_b", self.trips_with_case_b),
            ("case_a_repairs", self.case_a_repairs),
            ("case_b_repairs", self.case_b_repairs),
            ("points_inserted", self.points_inserted),
            ("points_removed", self.points_removed),
            ("split_parents", self.split_parents),
            ("split_children", self.split_children),
            ("stays_excised", self.stays_excised),
            ("output", self.output),
        ]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::csv_writer(path)?;
        w.row(["category", "count"])?;
        for (k, v) in self.rows() {
            w.row([k.to_string(), v.to_string()])?;
        }
        w.finish()
    }
}

enum TripOutcome {
    Rejected(Rejection),
    Cleaned { trips: Vec<CleanTrip>, stats: RepairStats, stays: usize, split: bool },
}

fn clean_one(trip: &RawTrip, params: &CleaningParams) -> TripOutcome {
    let clean = match CleanTrip::from_raw(trip) {
        Ok(c) => c,
        Err(r) => return TripOutcome::Rejected(r),
    };
    if let Some(bbox) = &params.region {
        if !trip.points.iter().all(|p| bbox.contains(*p)) {
            return TripOutcome::Rejected(Rejection::OutsideRegion);
        }
    }
    let (repaired, stats) = match repair_spikes(&clean, &params.repair) {
        RepairOutcome::Repaired { trip, stats } => (trip, stats),
        RepairOutcome::Unrepairable { .. } => return TripOutcome::Rejected(Rejection::Unrepairable),
    };
    let (pieces, stays) = stays::split_with_count(&repaired, &params.stays);
    let split = stays > 0;
    TripOutcome::Cleaned { trips: pieces, stats, stays, split }
}

/// Runs interval inference, region filtering, spike repair and stay
/// splitting over every trip. Output order follows input order.
pub fn clean_trips(raw: &[RawTrip], malformed: u64, params: &CleaningParams) -> (Vec<CleanTrip>, CleaningReport) {
    let outcomes: Vec<TripOutcome> = raw.par_iter().map(|t| clean_one(t, params)).collect();
    let mut report = CleaningReport {
        input: raw.len() as u64 + malformed,
        rejected_malformed: malformed,
        ..Default::default()
    };
    let mut out = Vec::new();
    for o in outcomes {
        match o {
            TripOutcome::Rejected(r) => report.reject(r),
            TripOutcome::Cleaned { trips, stats, stays, split } => {
                report.case_a_repairs += stats.case_a as u64;
                report.case_b_repairs += stats.case_b as u64;
                report.trips_with_case_a += (stats.case_a > 0) as u64;
                report.trips_with_case_b += (stats.case_b > 0) as u64;
                report.points_inserted += stats.inserted as u64;
                report.points_removed += stats.removed as u64;
                if split {
                    report.split_parents += 1;
                    report.split_children += trips.len() as u64;
                    report.stays_excised += stays as u64;
                }
                out.extend(trips);
            }
        }
    }
    report.output = out.len() as u64;
    (out, report)
}

#[derive(Debug, Deserialize)]
struct RawRow {
    trip_id: String,
    pickup_iso8601: String,
    dropoff_iso8601: String,
    length_km: f64,
    polyline: String,
}

pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S%.f")
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S%.f"))
        .ok()
        .map(|n| n.and_utc())
}

pub fn format_timestamp(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

/// Parses `lat lon;lat lon;...`.
pub fn parse_polyline(s: &str) -> Option<Vec<LatLon>> {
    s.split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|p| {
            let mut it = p.split_whitespace();
            let lat: f64 = it.next()?.parse().ok()?;
            let lon: f64 = it.next()?.parse().ok()?;
            if it.next().is_some() {
                return None;
            }
            let ll = LatLon::new(lat, lon);
            ll.is_valid().then_some(ll)
        })
        .collect()
}

pub fn format_polyline(points: impl Iterator<Item = LatLon>) -> String {
    points
        .map(|p| format!("{} {}", p.lat, p.lon))
        .collect::<Vec<_>>()
        .join(";")
}

/// Reads `trip_id,pickup_iso8601,dropoff_iso8601,length_km,polyline`.
/// Malformed rows are skipped and returned with their line numbers.
pub fn read_raw_trips(path: &Path) -> Result<(Vec<RawTrip>, Vec<(u64, String)>)> {
    let mut reader = crate::io::csv_reader(path)?;
    let mut trips = Vec::new();
    let mut bad = Vec::new();
    for (i, row) in reader.deserialize::<RawRow>().enumerate() {
        let line = i as u64 + 2;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                bad.push((line, e.to_string()));
                continue;
            }
        };
        let (Some(pickup), Some(dropoff)) = (parse_timestamp(&row.pickup_iso8601), parse_timestamp(&row.dropoff_iso8601)) else {
            bad.push((line, format!("trip {}: unparseable timestamp", row.trip_id)));
            continue;
        };
        let Some(points) = parse_polyline(&row.polyline) else {
            bad.push((line, format!("trip {}: malformed polyline", row.trip_id)));
            continue;
        };
        trips.push(RawTrip {
            trip_id: row.trip_id,
            pickup,
            dropoff,
            reported_length: row.length_km,
            points,
        });
    }
    Ok((trips, bad))
}

pub fn write_raw_trips(path: &Path, trips: &[RawTrip]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    w.row(["trip_id", "pickup_iso8601", "dropoff_iso8601", "length_km", "polyline"])?;
    for t in trips {
        w.row([
            t.trip_id.clone(),
            format_timestamp(&t.pickup),
            format_timestamp(&t.dropoff),
            t.reported_length.to_string(),
            format_polyline(t.points.iter().copied()),
        ])?;
    }
    w.finish()
}

/// Writes cleaned trips as `trip_id,parent_trip,start_iso8601,interval_s,points`
/// where `points` is `slot lat lon;...`.
pub fn write_clean_trips(path: &Path, trips: &[CleanTrip]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    w.row(["trip_id", "parent_trip", "start_iso8601", "interval_s", "points"])?;
    for t in trips {
        let pts = t
            .points
            .iter()
            .map(|p| format!("{} {} {}", p.slot, p.pos.lat, p.pos.lon))
            .collect::<Vec<_>>()
            .join(";");
        w.row([
            t.trip_id.clone(),
            t.parent_trip.clone().unwrap_or_default(),
            format_timestamp(&t.start),
            t.interval.to_string(),
            pts,
        ])?;
    }
    w.finish()
}

#[derive(Debug, Deserialize)]
struct CleanRow {
    trip_id: String,
    parent_trip: String,
    start_iso8601: String,
    interval_s: f64,
    points: String,
}

pub fn read_clean_trips(path: &Path) -> Result<Vec<CleanTrip>> {
    let rows: Vec<CleanRow> = crate::io::read_csv(path)?;
    rows.into_iter()
        .enumerate()
        .map(|(i, r)| {
            let line = i as u64 + 2;
            let start = parse_timestamp(&r.start_iso8601)
                .ok_or_else(|| Error::malformed(path, line, "bad start timestamp"))?;
            let points = r
                .points
                .split(';')
                .map(|p| {
                    let mut it = p.split_whitespace();
                    let slot = it.next()?.parse().ok()?;
                    let lat = it.next()?.parse().ok()?;
                    let lon = it.next()?.parse().ok()?;
                    Some(TrackPoint { slot, pos: LatLon::new(lat, lon) })
                })
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| Error::malformed(path, line, "bad point list"))?;
            Ok(CleanTrip {
                trip_id: r.trip_id,
                parent_trip: (!r.parent_trip.is_empty()).then_some(r.parent_trip),
                start,
                interval: r.interval_s,
                points,
            })
        })
        .collect()
}
