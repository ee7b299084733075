//! Per-edge speed profiles and the four StreetSmart features.
//!
//! A cleaned trip gives a speed for every pair of consecutive GPS points. Those
//! speeds are placed at the midpoint time of their segment and joined linearly,
//! which yields a continuous speed signal over the whole trip. A matched
//! traversal of an edge samples that signal at its entry time, at every knot
//! strictly inside the traversal, and at its exit time.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use chrono::{DateTime, Datelike, FixedOffset, Timelike, Utc, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CleanTrip;
use crate::matching::SegmentRow;
use crate::network::EdgeId;

/// Speeds below this (m/s) count as idling.
pub const DEFAULT_IDLE_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayFilter {
    Weekday,
    Weekend,
    Any,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub label: String,
    pub days: DayFilter,
    /// Local hour the window opens, inclusive.
    pub start_hour: u32,
    /// Local hour the window closes, exclusive.
    pub end_hour: u32,
}

impl TimeWindow {
    pub fn new(label: &str, days: DayFilter, start_hour: u32, end_hour: u32) -> Self {
        Self { label: label.to_string(), days, start_hour, end_hour }
    }

    /// Weekday morning peak, midday off-peak and evening peak.
    pub fn defaults() -> Vec<TimeWindow> {
        vec![
            Self::new("morning_peak", DayFilter::Weekday, 8, 9),
            Self::new("midday_offpeak", DayFilter::Weekday, 12, 13),
            Self::new("evening_peak", DayFilter::Weekday, 17, 18),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_hour >= self.end_hour || self.end_hour > 24 {
            return Err(Error::Config(format!(
                "window {}: hours {}..{} must satisfy start < end <= 24",
                self.label, self.start_hour, self.end_hour
            )));
        }
        Ok(())
    }

    pub fn contains(&self, t: DateTime<Utc>, calendar: &Calendar) -> bool {
        let local = t.with_timezone(&calendar.offset);
        let weekend = calendar.weekend.contains(&local.weekday());
        let day_ok = match self.days {
            DayFilter::Weekday => !weekend,
            DayFilter::Weekend => weekend,
            DayFilter::Any => true,
        };
        day_ok && (self.start_hour..self.end_hour).contains(&local.hour())
    }
}

/// Local time zone and weekend days used to place timestamps in windows.
#[derive(Debug, Clone, PartialEq)]
pub struct Calendar {
    pub offset: FixedOffset,
    pub weekend: Vec<Weekday>,
}

impl Default for Calendar {
    /// UTC with a Saturday–Sunday weekend.
    fn default() -> Self {
        Self { offset: FixedOffset::east_opt(0).unwrap(), weekend: vec![Weekday::Sat, Weekday::Sun] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProfileFeatures {
    /// Seconds spent below the idle threshold.
    pub t_idle: f64,
    /// Seconds spent moving.
    pub t_move: f64,
    /// ∫|a| dx in m²/s².
    pub accel_integral: f64,
    /// Kilometers.
    pub length: f64,
}

impl ProfileFeatures {
    /// Features of driving `length_km` at a constant speed for `seconds`.
    pub fn constant_speed(seconds: f64, length_km: f64) -> Self {
        Self { t_idle: 0.0, t_move: seconds, accel_integral: 0.0, length: length_km }
    }

    pub fn duration(&self) -> f64 {
        self.t_idle + self.t_move
    }

    pub fn scaled(&self, f: f64) -> Self {
        Self {
            t_idle: self.t_idle * f,
            t_move: self.t_move * f,
            accel_integral: self.accel_integral * f,
            length: self.length * f,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self {
            t_idle: self.t_idle + o.t_idle,
            t_move: self.t_move + o.t_move,
            accel_integral: self.accel_integral + o.accel_integral,
            length: self.length + o.length,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.t_idle, self.t_move, self.accel_integral, self.length]
    }
}

/// Features of a sampled speed trace `(t seconds, v m/s)`.
///
/// Speed is treated as linear between samples, so on each interval the
/// acceleration is constant and ∫|a|dx = ∫|a|·v dt = |Δv|·v̄ exactly.
pub fn features(samples: &[(f64, f64)], idle_threshold: f64) -> Result<ProfileFeatures> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "a speed profile needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let mut f = ProfileFeatures::default();
    for w in samples.windows(2) {
        let (t0, v0) = w[0];
        let (t1, v1) = w[1];
        let dt = t1 - t0;
        let vbar = 0.5 * (v0 + v1);
        if vbar < idle_threshold {
            f.t_idle += dt;
        }
        f.accel_integral += (v1 - v0).abs() * vbar;
        f.length += vbar * dt;
    }
    f.t_move = (samples[samples.len() - 1].0 - samples[0].0) - f.t_idle;
    f.length /= 1000.0;
    Ok(f)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedProfile {
    pub edge: EdgeId,
    pub trip_id: String,
    /// `(t, v)` with `t` in seconds from the trip start, strictly increasing.
    pub samples: Vec<(f64, f64)>,
}

impl SpeedProfile {
    pub fn features(&self, idle_threshold: f64) -> Result<ProfileFeatures> {
        features(&self.samples, idle_threshold)
    }
}

/// Continuous speed signal of a trip, knots at segment midpoints.
#[derive(Debug, Clone)]
pub struct SpeedSignal {
    knots: Vec<(f64, f64)>,
}

impl SpeedSignal {
    pub fn from_trip(trip: &CleanTrip) -> Self {
        let dist = trip.segment_distances();
        let knots = dist
            .iter()
            .enumerate()
            .map(|(k, d)| {
                let (t0, t1) = (trip.offset(k), trip.offset(k + 1));
                (0.5 * (t0 + t1), d / (t1 - t0))
            })
            .collect();
        Self { knots }
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn at(&self, t: f64) -> f64 {
        let k = &self.knots;
        if k.is_empty() {
            return 0.0;
        }
        let i = k.partition_point(|p| p.0 <= t);
        if i == 0 {
            return k[0].1;
        }
        if i == k.len() {
            return k[i - 1].1;
        }
        let (a, b) = (k[i - 1], k[i]);
        a.1 + (b.1 - a.1) * (t - a.0) / (b.0 - a.0)
    }

    /// Samples over `[entry, exit]`: both ends plus every interior knot.
    pub fn sample(&self, entry: f64, exit: f64) -> Vec<(f64, f64)> {
        let mut out = vec![(entry, self.at(entry))];
        let lo = self.knots.partition_point(|p| p.0 <= entry);
        for &(t, v) in self.knots[lo..].iter().take_while(|p| p.0 < exit) {
            out.push((t, v));
        }
        out.push((exit, self.at(exit)));
        out
    }
}

/// Profiles per `(edge, window index)`, in deterministic order.
#[derive(Debug, Clone, Default)]
pub struct ProfileSet {
    pub windows: Vec<TimeWindow>,
    pub profiles: BTreeMap<(EdgeId, usize), Vec<SpeedProfile>>,
}

impl ProfileSet {
    pub fn get(&self, edge: EdgeId, window: usize) -> &[SpeedProfile] {
        self.profiles.get(&(edge, window)).map_or(&[], |v| v.as_slice())
    }

    pub fn traversal_count(&self) -> usize {
        self.profiles.values().map(Vec::len).sum()
    }

    /// Mean features of every `(edge, window)` with at least one usable profile.
    pub fn mean_features(&self, idle_threshold: f64) -> FeatureTable {
        let mut table = FeatureTable::default();
        for (&(edge, w), list) in &self.profiles {
            let feats: Vec<ProfileFeatures> =
                list.iter().filter_map(|p| p.features(idle_threshold).ok()).collect();
            if let Some(mean) = mean_features(&feats) {
                table.insert(edge, &self.windows[w].label, EdgeFeatures { n_traversals: feats.len(), mean });
            }
        }
        table
    }
}

/// Builds speed profiles from matched traversals.
///
/// `traversals` are rows of matched routes, keyed by trip id; traversals whose
/// trip is unknown are ignored. A traversal joins every window its absolute
/// entry time falls in.
pub fn extract_profiles(
    traversals: &[SegmentRow],
    trips: &[CleanTrip],
    windows: &[TimeWindow],
    calendar: &Calendar,
) -> ProfileSet {
    let by_id: HashMap<&str, &CleanTrip> = trips.iter().map(|t| (t.trip_id.as_str(), t)).collect();
    let mut groups: Vec<&[SegmentRow]> = Vec::new();
    let mut start = 0;
    for i in 1..=traversals.len() {
        if i == traversals.len() || traversals[i].trip_id != traversals[start].trip_id {
            if i > start {
                groups.push(&traversals[start..i]);
            }
            start = i;
        }
    }
    let per_trip: Vec<Vec<((EdgeId, usize), SpeedProfile)>> = groups
        .par_iter()
        .map(|rows| {
            let Some(trip) = by_id.get(rows[0].trip_id.as_str()) else {
                return Vec::new();
            };
            let signal = SpeedSignal::from_trip(trip);
            let mut out = Vec::new();
            for r in rows.iter().filter(|r| r.exit_s > r.entry_s) {
                let entered = crate::ingest::add_seconds(trip.start, r.entry_s);
                let hits: Vec<usize> =
                    (0..windows.len()).filter(|&w| windows[w].contains(entered, calendar)).collect();
                if hits.is_empty() {
                    continue;
                }
                let samples = signal.sample(r.entry_s, r.exit_s);
                for w in hits {
                    let profile = SpeedProfile { edge: r.edge_id, trip_id: trip.trip_id.clone(), samples: samples.clone() };
                    out.push(((r.edge_id, w), profile));
                }
            }
            out
        })
        .collect();
    let mut profiles: BTreeMap<(EdgeId, usize), Vec<SpeedProfile>> = BTreeMap::new();
    for (key, p) in per_trip.into_iter().flatten() {
        profiles.entry(key).or_default().push(p);
    }
    ProfileSet { windows: windows.to_vec(), profiles }
}

/// Arithmetic mean of each feature; `None` for an empty slice.
pub fn mean_features(feats: &[ProfileFeatures]) -> Option<ProfileFeatures> {
    if feats.is_empty() {
        return None;
    }
    let sum = feats.iter().fold(ProfileFeatures::default(), |acc, f| acc.add(f));
    Some(sum.scaled(1.0 / feats.len() as f64))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeFeatures {
    pub n_traversals: usize,
    pub mean: ProfileFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct FeatureRow {
    edge_id: EdgeId,
    window: String,
    n_traversals: usize,
    t_idle_s: f64,
    t_move_s: f64,
    accel_int: f64,
    length_km: f64,
}

/// Mean features keyed by window label, then edge id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureTable {
    by_window: BTreeMap<String, BTreeMap<EdgeId, EdgeFeatures>>,
}

impl FeatureTable {
    pub fn insert(&mut self, edge: EdgeId, window: &str, f: EdgeFeatures) {
        self.by_window.entry(window.to_string()).or_default().insert(edge, f);
    }

    pub fn get(&self, edge: EdgeId, window: &str) -> Option<&EdgeFeatures> {
        self.by_window.get(window)?.get(&edge)
    }

    pub fn window(&self, window: &str) -> Option<&BTreeMap<EdgeId, EdgeFeatures>> {
        self.by_window.get(window)
    }

    pub fn windows(&self) -> impl Iterator<Item = &str> {
        self.by_window.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.by_window.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `edge_id,window,n_traversals,t_idle_s,t_move_s,accel_int,length_km`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = crate::io::csv_writer(path)?;
        for (window, edges) in &self.by_window {
            for (&edge_id, f) in edges {
                w.record(FeatureRow {
                    edge_id,
                    window: window.clone(),
                    n_traversals: f.n_traversals,
                    t_idle_s: f.mean.t_idle,
                    t_move_s: f.mean.t_move,
                    accel_int: f.mean.accel_integral,
                    length_km: f.mean.length,
                })?;
            }
        }
        w.finish()
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut table = Self::default();
        for r in crate::io::read_csv::<FeatureRow>(path)? {
            let mean = ProfileFeatures {
                t_idle: r.t_idle_s,
                t_move: r.t_move_s,
                accel_integral: r.accel_int,
                length: r.length_km,
            };
            table.insert(r.edge_id, &r.window, EdgeFeatures { n_traversals: r.n_traversals, mean });
        }
        Ok(table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, LatLon};
    use crate::ingest::{parse_timestamp, TrackPoint};
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    /// Integrates |a|·v on a linear interpolation upsampled 100x with the midpoint rule.
    fn quadrature(samples: &[(f64, f64)]) -> f64 {
        let mut total = 0.0;
        for w in samples.windows(2) {
            let (t0, v0) = w[0];
            let (t1, v1) = w[1];
            let a = (v1 - v0) / (t1 - t0);
            let h = (t1 - t0) / 100.0;
            for k in 0..100 {
                let tm = (k as f64 + 0.5) * h;
                total += a.abs() * (v0 + a * tm) * h;
            }
        }
        total
    }

    #[test]
    fn constant_cruise() {
        let s: Vec<_> = (0..=10).map(|i| (i as f64 * 10.0, 10.0)).collect();
        let f = features(&s, DEFAULT_IDLE_THRESHOLD).unwrap();
        assert_eq!((f.t_idle, f.t_move, f.accel_integral), (0.0, 100.0, 0.0));
        assert!((f.length - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary() {
        let f = features(&[(0.0, 0.0), (20.0, 0.0), (50.0, 0.0)], DEFAULT_IDLE_THRESHOLD).unwrap();
        assert_eq!(f, ProfileFeatures { t_idle: 50.0, ..Default::default() });
    }

    #[test]
    fn single_sample_rejected() {
        assert!(features(&[(0.0, 3.0)], 0.3).is_err());
    }

    #[test]
    fn mean_of_two() {
        let a = ProfileFeatures::constant_speed(10.0, 0.1);
        let b = ProfileFeatures::constant_speed(20.0, 0.3);
        let m = mean_features(&[a, b]).unwrap();
        assert_eq!(m.t_move, 15.0);
        assert!((m.length - 0.2).abs() < 1e-15);
        assert_eq!(mean_features(&[a]).unwrap(), a);
        assert!(mean_features(&[]).is_none());
    }

    proptest! {
        #[test]
        fn accel_integral_matches_quadrature(
            steps in prop::collection::vec((0.2f64..10.0, 0.0f64..30.0), 1..40),
            v0 in 0.0f64..30.0,
        ) {
            let mut s = vec![(0.0, v0)];
            for (dt, v) in steps {
                let t = s.last().unwrap().0 + dt;
                s.push((t, v));
            }
            let f = features(&s, DEFAULT_IDLE_THRESHOLD).unwrap();
            prop_assert!(close(f.accel_integral, quadrature(&s), 1e-6));
            prop_assert!((f.t_idle + f.t_move - (s.last().unwrap().0 - s[0].0)).abs() < 1e-9);
            prop_assert!(f.t_idle >= 0.0 && f.t_move >= -1e-9 && f.length >= 0.0);
            let constant = s.windows(2).all(|w| w[0].1 == w[1].1);
            prop_assert_eq!(f.accel_integral == 0.0, constant);
        }

        #[test]
        fn translation_invariant(
            steps in prop::collection::vec((0.5f64..5.0, 0.0f64..20.0), 1..20),
            shift in -1.0e4f64..1.0e4,
        ) {
            let mut s = vec![(0.0, 1.0)];
            for (dt, v) in steps {
                let t = s.last().unwrap().0 + dt;
                s.push((t, v));
            }
            let moved: Vec<_> = s.iter().map(|&(t, v)| (t + shift, v)).collect();
            let a = features(&s, 0.3).unwrap();
            let b = features(&moved, 0.3).unwrap();
            prop_assert!(close(a.t_move, b.t_move, 1e-9));
            prop_assert!(close(a.t_idle, b.t_idle, 1e-9));
            prop_assert!(close(a.length, b.length, 1e-9));
            prop_assert_eq!(a.accel_integral, b.accel_integral);
        }
    }

    fn straight_trip(id: &str, start: &str) -> CleanTrip {
        let o = LatLon::new(24.7, 46.7);
        CleanTrip {
            trip_id: id.into(),
            parent_trip: None,
            start: parse_timestamp(start).unwrap(),
            interval: 10.0,
            points: (0..6)
                .map(|i| TrackPoint { slot: i, pos: destination(o, 90.0, 50.0 * i as f64 + 2.0 * (i * i) as f64) })
                .collect(),
        }
    }

    fn row(trip: &str, seq: usize, edge: EdgeId, entry: f64, exit: f64) -> SegmentRow {
        SegmentRow { trip_id: trip.into(), seq, edge_id: edge, entry_s: entry, exit_s: exit }
    }

    #[test]
    fn signal_interpolates_and_holds_ends() {
        let trip = straight_trip("a", "2016-03-01T08:00:00Z");
        let sig = SpeedSignal::from_trip(&trip);
        let k = sig.knots().to_vec();
        assert_eq!(k.len(), 5);
        assert_eq!(sig.at(0.0), k[0].1);
        assert_eq!(sig.at(100.0), k[4].1);
        assert!((sig.at(10.0) - 0.5 * (k[0].1 + k[1].1)).abs() < 1e-9);
        let s = sig.sample(3.0, 27.0);
        assert_eq!(s.iter().map(|p| p.0).collect::<Vec<_>>(), vec![3.0, 5.0, 15.0, 25.0, 27.0]);
    }

    #[test]
    fn windows_by_entry_time() {
        // 2016-03-01 is a Tuesday, 2016-03-04 a Friday.
        let tue = straight_trip("tue", "2016-03-01T08:30:00Z");
        let fri = straight_trip("fri", "2016-03-04T08:30:00Z");
        let rows = vec![row("tue", 0, 7, 0.0, 20.0), row("fri", 0, 7, 0.0, 20.0)];
        let saudi = Calendar { offset: FixedOffset::east_opt(0).unwrap(), weekend: vec![Weekday::Fri, Weekday::Sat] };
        let set = extract_profiles(&rows, &[tue, fri], &TimeWindow::defaults(), &saudi);
        assert_eq!(set.get(7, 0).len(), 1);
        assert_eq!(set.get(7, 0)[0].trip_id, "tue");
        assert!(set.get(7, 1).is_empty() && set.get(7, 2).is_empty());
    }

    #[test]
    fn local_offset_moves_window() {
        // 05:30 UTC is 08:30 at UTC+3.
        let t = straight_trip("a", "2016-03-01T05:30:00Z");
        let rows = vec![row("a", 0, 1, 0.0, 20.0)];
        let riyadh = Calendar { offset: FixedOffset::east_opt(3 * 3600).unwrap(), ..Calendar::default() };
        assert_eq!(extract_profiles(&rows, &[t.clone()], &TimeWindow::defaults(), &riyadh).traversal_count(), 1);
        assert_eq!(extract_profiles(&rows, &[t], &TimeWindow::defaults(), &Calendar::default()).traversal_count(), 0);
    }

    #[test]
    fn traversal_counts_and_means() {
        let trips: Vec<_> = (0..4).map(|i| straight_trip(&format!("t{i}"), "2016-03-01T12:10:00Z")).collect();
        let mut rows = Vec::new();
        for (i, t) in trips.iter().enumerate() {
            rows.push(row(&t.trip_id, 0, 1, 0.0, 12.0));
            if i % 2 == 0 {
                rows.push(row(&t.trip_id, 1, 2, 12.0, 40.0));
            }
        }
        let set = extract_profiles(&rows, &trips, &TimeWindow::defaults(), &Calendar::default());
        assert_eq!(set.get(1, 1).len(), 4);
        assert_eq!(set.get(2, 1).len(), 2);
        let table = set.mean_features(0.3);
        let direct: Vec<_> = set.get(2, 1).iter().map(|p| p.features(0.3).unwrap()).collect();
        let e2 = table.get(2, "midday_offpeak").unwrap();
        assert_eq!(e2.n_traversals, 2);
        assert_eq!(e2.mean, mean_features(&direct).unwrap());
        assert!(table.get(2, "morning_peak").is_none());
    }

    #[test]
    fn feature_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let mut table = FeatureTable::default();
        let mean = ProfileFeatures { t_idle: 1.5, t_move: 2.0 / 3.0, accel_integral: 0.1, length: 1e-3 };
        table.insert(4, "morning_peak", EdgeFeatures { n_traversals: 3, mean });
        table.write_csv(&path).unwrap();
        assert_eq!(FeatureTable::read_csv(&path).unwrap(), table);
    }
}
