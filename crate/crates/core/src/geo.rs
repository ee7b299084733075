//! Spherical geometry on WGS84 coordinates.

use serde::{Deserialize, Serialize};

/// Mean Earth radius used for every great-circle computation in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub const fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }

    pub fn is_valid(&self) -> bool {
        (-90.0..=90.0).contains(&self.lat) && (-180.0..=180.0).contains(&self.lon)
    }

    /// Great-circle distance in meters (haversine).
    pub fn haversine(&self, other: &LatLon) -> f64 {
        haversine(*self, *other)
    }
}

pub fn haversine(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// Point at fraction `f` along the great circle from `a` to `b`.
pub fn interpolate(a: LatLon, b: LatLon, f: f64) -> LatLon {
    let delta = haversine(a, b) / EARTH_RADIUS_M;
    if delta < 1e-12 {
        return LatLon::new(a.lat + (b.lat - a.lat) * f, a.lon + (b.lon - a.lon) * f);
    }
    let (phi1, l1) = (a.lat.to_radians(), a.lon.to_radians());
    let (phi2, l2) = (b.lat.to_radians(), b.lon.to_radians());
    let wa = ((1.0 - f) * delta).sin() / delta.sin();
    let wb = (f * delta).sin() / delta.sin();
    let x = wa * phi1.cos() * l1.cos() + wb * phi2.cos() * l2.cos();
    let y = wa * phi1.cos() * l1.sin() + wb * phi2.cos() * l2.sin();
    let z = wa * phi1.sin() + wb * phi2.sin();
    LatLon::new(
        z.atan2((x * x + y * y).sqrt()).to_degrees(),
        y.atan2(x).to_degrees(),
    )
}

/// Destination reached by travelling `distance` meters from `start` on
/// initial `bearing_deg` (clockwise from north).
pub fn destination(start: LatLon, bearing_deg: f64, distance: f64) -> LatLon {
    let delta = distance / EARTH_RADIUS_M;
    let theta = bearing_deg.to_radians();
    let phi1 = start.lat.to_radians();
    let l1 = start.lon.to_radians();
    let phi2 = (phi1.sin() * delta.cos() + phi1.cos() * delta.sin() * theta.cos()).asin();
    let l2 = l1
        + (theta.sin() * delta.sin() * phi1.cos()).atan2(delta.cos() - phi1.sin() * phi2.sin());
    let lon = (l2.to_degrees() + 540.0) % 360.0 - 180.0;
    LatLon::new(phi2.to_degrees(), lon)
}

/// Axis-aligned lat/lon rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub fn contains(&self, p: LatLon) -> bool {
        p.lat >= self.min_lat && p.lat <= self.max_lat && p.lon >= self.min_lon && p.lon <= self.max_lon
    }

    pub fn is_valid(&self) -> bool {
        self.min_lat < self.max_lat && self.min_lon < self.max_lon
    }
}
