//! Rule-based repair of GPS speed spikes.
//!
//! A lone spiking segment between two plausible ones means points were
//! missed (lost signal): the skipped points are re-inserted on the great
//! circle, their count estimated from the mean speed just before and after.
//! Two consecutive spiking segments mean one point jumped away and back:
//! that point is removed. Removals are resolved before insertions, then the
//! trip is re-scanned.

use super::{segment_speeds, CleanTrip, TrackPoint};
use crate::geo::{haversine, interpolate};

#[derive(Debug, Clone, PartialEq)]
pub struct RepairParams {
    /// Speeds strictly above this (km/h) are spikes.
    pub threshold_kmh: f64,
    pub max_passes: usize,
    /// Upper bound on points re-inserted into a single gap.
    pub max_inserted: u32,
}

impl Default for RepairParams {
    fn default() -> Self {
        Self { threshold_kmh: super::DEFAULT_SPIKE_KMH, max_passes: 10, max_inserted: 100 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RepairStats {
    /// Gaps filled by inserting points.
    pub case_a: u32,
    /// Anomalous points removed.
    pub case_b: u32,
    pub inserted: u32,
    pub removed: u32,
    pub passes: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RepairOutcome {
    Repaired { trip: CleanTrip, stats: RepairStats },
    Unrepairable { stats: RepairStats },
}

impl RepairOutcome {
    pub fn trip(&self) -> Option<&CleanTrip> {
        match self {
            RepairOutcome::Repaired { trip, .. } => Some(trip),
            RepairOutcome::Unrepairable { .. } => None,
        }
    }
}

pub fn repair_spikes(trip: &CleanTrip, params: &RepairParams) -> RepairOutcome {
    let threshold = params.threshold_kmh / 3.6;
    let mut trip = trip.clone();
    let mut stats = RepairStats::default();

    for _ in 0..params.max_passes {
        if trip.points.len() < 2 {
            return RepairOutcome::Unrepairable { stats };
        }
        let speeds = segment_speeds(&trip);
        let spike: Vec<bool> = speeds.iter().map(|&v| v > threshold).collect();
        if !spike.iter().any(|&s| s) {
            return RepairOutcome::Repaired { trip, stats };
        }
        stats.passes += 1;
        if remove_anomalous(&mut trip, &spike, &mut stats) {
            trip.rebase();
            continue;
        }
        insert_missing(&mut trip, &speeds, &spike, params.max_inserted, &mut stats);
    }

    let clean = trip.points.len() >= 2 && segment_speeds(&trip).iter().all(|&v| v <= threshold);
    if clean {
        RepairOutcome::Repaired { trip, stats }
    } else {
        RepairOutcome::Unrepairable { stats }
    }
}

/// Removes the middle point of every spike pair, and endpoints whose only
/// segment spikes. Returns whether anything was removed.
fn remove_anomalous(trip: &mut CleanTrip, spike: &[bool], stats: &mut RepairStats) -> bool {
    let segs = spike.len();
    let mut drop = vec![false; trip.points.len()];
    let mut j = 0;
    while j < segs {
        if spike[j] && j + 1 < segs && spike[j + 1] {
            drop[j + 1] = true;
            j += 2;
        } else {
            j += 1;
        }
    }
    // A boundary spike has no speed on one side to estimate a gap from.
    if spike[0] && (segs == 1 || !spike[1]) {
        drop[0] = true;
    }
    if segs > 1 && spike[segs - 1] && !spike[segs - 2] {
        drop[segs] = true;
    }
    let n = drop.iter().filter(|&&d| d).count();
    if n == 0 {
        return false;
    }
    let mut k = 0;
    trip.points.retain(|_| {
        let keep = !drop[k];
        k += 1;
        keep
    });
    stats.case_b += n as u32;
    stats.removed += n as u32;
    true
}

fn insert_missing(trip: &mut CleanTrip, speeds: &[f64], spike: &[bool], max_inserted: u32, stats: &mut RepairStats) {
    let segs = spike.len();
    let old_last_slot = trip.points.last().map_or(0, |p| p.slot);
    let mut out: Vec<TrackPoint> = Vec::with_capacity(trip.points.len());
    let mut shift = 0u32;
    out.push(trip.points[0]);
    for j in 0..segs {
        let a = trip.points[j];
        let b = trip.points[j + 1];
        let span = b.slot - a.slot;
        let isolated = spike[j] && j > 0 && j + 1 < segs && !spike[j - 1] && !spike[j + 1];
        if isolated {
            let step = 0.5 * (speeds[j - 1] + speeds[j + 1]) * trip.interval;
            let d = haversine(a.pos, b.pos);
            let estimate = if step > 0.0 { (d / step).round() } else { f64::INFINITY };
            // total slots the gap should span, at least one more than now
            let new_span = estimate.clamp((span + 1) as f64, (span + max_inserted) as f64) as u32;
            let base = a.slot + shift;
            for k in 1..new_span {
                out.push(TrackPoint {
                    slot: base + k,
                    pos: interpolate(a.pos, b.pos, k as f64 / new_span as f64),
                });
            }
            stats.case_a += 1;
            stats.inserted += new_span - 1;
            shift += new_span - span;
        }
        out.push(TrackPoint { slot: b.slot + shift, pos: b.pos });
    }
    if shift > 0 {
        // the trip still lasts as long as before; the interval was overestimated
        let duration = old_last_slot as f64 * trip.interval;
        trip.interval = duration / (old_last_slot + shift) as f64;
    }
    trip.points = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::{destination, LatLon};
    use crate::ingest::parse_timestamp;

    fn straight(n: usize, step_m: f64, interval: f64) -> CleanTrip {
        let a = LatLon::new(24.7, 46.7);
        CleanTrip {
            trip_id: "t".into(),
            parent_trip: None,
            start: parse_timestamp("2016-03-01T08:00:00Z").unwrap(),
            interval,
            points: (0..n)
                .map(|i| TrackPoint { slot: i as u32, pos: destination(a, 45.0, i as f64 * step_m) })
                .collect(),
        }
    }

    fn max_speed_kmh(t: &CleanTrip) -> f64 {
        segment_speeds(t).into_iter().fold(0.0, f64::max) * 3.6
    }

    #[test]
    fn clean_trip_is_unchanged() {
        let t = straight(30, 120.0, 10.0);
        match repair_spikes(&t, &RepairParams::default()) {
            RepairOutcome::Repaired { trip, stats } => {
                assert_eq!(trip, t);
                assert_eq!(stats, RepairStats::default());
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn teleported_point_is_removed() {
        let mut t = straight(30, 120.0, 10.0);
        let before = segment_speeds(&t);
        t.points[12].pos = destination(t.points[12].pos, 135.0, 1500.0);
        let out = repair_spikes(&t, &RepairParams::default());
        let RepairOutcome::Repaired { trip, stats } = out else { panic!() };
        assert_eq!(stats.case_b, 1);
        assert_eq!(trip.len(), 29);
        assert_eq!(trip.interval, 10.0);
        let after = segment_speeds(&trip);
        // all other segments keep their speed; the bridged one spans two slots
        for j in 0..11 {
            assert!((after[j] - before[j]).abs() < 1e-9);
        }
        assert!((after[11] - before[11]).abs() < 1e-9);
        for j in 12..after.len() {
            assert!((after[j] - before[j + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn three_missing_points_are_reinserted() {
        let truth = straight(40, 150.0, 10.0);
        let mut observed = truth.clone();
        observed.points.drain(20..23);
        // the operator only gives us 37 points over the real duration
        let duration = truth.duration();
        for (i, p) in observed.points.iter_mut().enumerate() {
            p.slot = i as u32;
        }
        observed.interval = duration / 36.0;
        assert!(max_speed_kmh(&observed) > 160.0);
        let RepairOutcome::Repaired { trip, stats } = repair_spikes(&observed, &RepairParams::default()) else {
            panic!()
        };
        assert_eq!(stats.case_a, 1);
        assert_eq!(stats.inserted, 3);
        assert_eq!(trip.len(), 40);
        assert!((trip.interval - 10.0).abs() < 1e-9);
        assert!(max_speed_kmh(&trip) <= 160.0);
        for (p, q) in trip.points.iter().zip(&truth.points) {
            assert!(haversine(p.pos, q.pos) < 1e-3);
        }
    }

    #[test]
    fn boundary_spike_drops_endpoint() {
        let mut t = straight(10, 100.0, 10.0);
        t.points[0].pos = destination(t.points[0].pos, 200.0, 2000.0);
        let RepairOutcome::Repaired { trip, stats } = repair_spikes(&t, &RepairParams::default()) else { panic!() };
        assert_eq!(trip.len(), 9);
        assert_eq!(stats.case_b, 1);
        assert_eq!(trip.points[0].slot, 0);
        assert_eq!(trip.start, t.time(1));
    }

    #[test]
    fn hopeless_trip_is_flagged() {
        let t = straight(2, 5000.0, 10.0);
        assert!(matches!(repair_spikes(&t, &RepairParams::default()), RepairOutcome::Unrepairable { .. }));
    }

    #[test]
    fn repair_is_idempotent() {
        let mut t = straight(50, 130.0, 10.0);
        t.points[7].pos = destination(t.points[7].pos, 10.0, 900.0);
        t.points.drain(30..34);
        let p = RepairParams::default();
        let once = repair_spikes(&t, &p).trip().unwrap().clone();
        let twice = repair_spikes(&once, &p).trip().unwrap().clone();
        assert_eq!(once, twice);
    }
}
