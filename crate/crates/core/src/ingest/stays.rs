//! Excision of long stationary periods ("stays").

use super::CleanTrip;
use crate::geo::haversine;

#[derive(Debug, Clone, PartialEq)]
pub struct StayParams {
    /// A stationary run must last at least this long (seconds) to be a stay.
    pub min_duration: f64,
    /// Every point of the run lies within this distance (meters) of its first point.
    pub max_radius: f64,
}

impl Default for StayParams {
    fn default() -> Self {
        Self { min_duration: 2200.0, max_radius: 10.0 }
    }
}

/// Splits `trip` around every stay. The first and last point of a stay are
/// kept as the end and start of the neighbouring pieces, so piece durations
/// plus stay durations add up to the trip duration. Pieces with fewer than
/// two points are discarded. A trip without stays comes back unchanged.
pub fn split_stays(trip: &CleanTrip, params: &StayParams) -> Vec<CleanTrip> {
    split_with_count(trip, params).0
}

/// Stay boundaries as `(first, last)` point indices.
pub(crate) fn find_stays(trip: &CleanTrip, params: &StayParams) -> Vec<(usize, usize)> {
    let n = trip.points.len();
    let mut stays = Vec::new();
    let mut i = 0;
    while i + 1 < n {
        let anchor = trip.points[i].pos;
        let mut j = i + 1;
        while j < n && haversine(anchor, trip.points[j].pos) <= params.max_radius {
            j += 1;
        }
        let last = j - 1;
        if last > i && trip.offset(last) - trip.offset(i) >= params.min_duration {
            stays.push((i, last));
            i = last;
        } else {
            i += 1;
        }
    }
    stays
}

pub(crate) fn split_with_count(trip: &CleanTrip, params: &StayParams) -> (Vec<CleanTrip>, usize) {
    let stays = find_stays(trip, params);
    if stays.is_empty() {
        return (vec![trip.clone()], 0);
    }
    let mut bounds = Vec::with_capacity(stays.len() + 1);
    let mut start = 0;
    for &(first, last) in &stays {
        bounds.push((start, first));
        start = last;
    }
    bounds.push((start, trip.points.len() - 1));

    let children = bounds
        .into_iter()
        .filter(|(a, b)| b > a)
        .enumerate()
        .map(|(k, (a, b))| {
            let mut child = CleanTrip {
                trip_id: format!("{}#{}", trip.trip_id, k + 1),
                parent_trip: Some(trip.trip_id.clone()),
                start: trip.start,
                interval: trip.interval,
                points: trip.points[a..=b].to_vec(),
            };
            child.rebase();
            child
        })
        .collect();
    (children, stays.len())
}
