use std::collections::HashMap;

use crate::geo::{haversine, LatLon, EARTH_RADIUS_M};

/// Cell edge length used when a network builds its own index.
pub(crate) const DEFAULT_CELL_M: f64 = 25.0;

/// Uniform lat/lon grid over point positions. Lookups enumerate the cells
/// covering the query circle's bounding box and post-filter by haversine,
/// so results are exact.
#[derive(Debug, Clone, Default)]
pub struct GridIndex {
    cell_lat: f64,
    cell_lon: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
    len: usize,
}

impl GridIndex {
    pub fn build(points: impl Iterator<Item = LatLon>, cell_m: f64) -> Self {
        let points: Vec<LatLon> = points.collect();
        let mean_lat = if points.is_empty() {
            0.0
        } else {
            points.iter().map(|p| p.lat).sum::<f64>() / points.len() as f64
        };
        let cell_lat = (cell_m / EARTH_RADIUS_M).to_degrees();
        let cell_lon = cell_lat / mean_lat.to_radians().cos().max(0.01);
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key(*p, cell_lat, cell_lon))
                .or_default()
                .push(i as u32);
        }
        Self { cell_lat, cell_lon, cells, len: points.len() }
    }

    fn key(p: LatLon, cell_lat: f64, cell_lon: f64) -> (i64, i64) {
        ((p.lat / cell_lat).floor() as i64, (p.lon / cell_lon).floor() as i64)
    }

    /// Indices (with distances) of all points within `radius` meters of
    /// `center`, sorted by distance then index.
    pub fn within<P>(&self, center: LatLon, radius: f64, position: P) -> Vec<(usize, f64)>
    where
        P: Fn(usize) -> LatLon,
    {
        let mut out = Vec::new();
        if !(radius >= 0.0) || self.len == 0 {
            return out;
        }
        let delta = radius / EARTH_RADIUS_M;
        // widen slightly so boundary points survive floating-point rounding
        let dlat = delta.to_degrees() * (1.0 + 1e-9) + 1e-12;
        let lat_lo = center.lat - dlat;
        let lat_hi = center.lat + dlat;
        let cos_lat = center.lat.to_radians().cos();
        let full_scan = lat_lo <= -90.0 || lat_hi >= 90.0 || delta.sin() >= cos_lat;
        let dlon = if full_scan {
            180.0
        } else {
            (delta.sin() / cos_lat).asin().to_degrees() * (1.0 + 1e-9) + 1e-12
        };
        let lon_lo = center.lon - dlon;
        let lon_hi = center.lon + dlon;

        let r0 = (lat_lo / self.cell_lat).floor() as i64;
        let r1 = (lat_hi / self.cell_lat).floor() as i64;
        let c0 = (lon_lo / self.cell_lon).floor() as i64;
        let c1 = (lon_hi / self.cell_lon).floor() as i64;
        let n_cells = (r1 - r0 + 1).saturating_mul(c1 - c0 + 1);
        let wraps = lon_lo < -180.0 || lon_hi > 180.0;

        let mut test = |i: usize| {
            let d = haversine(center, position(i));
            if d <= radius {
                out.push((i, d));
            }
        };
        if full_scan || wraps || n_cells as usize > self.cells.len() {
            for i in 0..self.len {
                test(i);
            }
        } else {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    if let Some(ids) = self.cells.get(&(r, c)) {
                        for &i in ids {
                            test(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::destination;

    #[test]
    fn matches_linear_scan() {
        let center = LatLon::new(24.7, 46.7);
        let pts: Vec<LatLon> = (0..500)
            .map(|i| destination(center, (i * 37 % 360) as f64, (i * 13 % 400) as f64))
            .collect();
        let idx = GridIndex::build(pts.iter().copied(), 25.0);
        for q in 0..50 {
            let c = destination(center, (q * 53 % 360) as f64, (q * 7) as f64);
            for radius in [1.0, 25.0, 60.0, 1000.0] {
                let got: Vec<usize> = idx.within(c, radius, |i| pts[i]).into_iter().map(|x| x.0).collect();
                let mut want: Vec<(usize, f64)> = pts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, haversine(c, *p)))
                    .filter(|x| x.1 <= radius)
                    .collect();
                want.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                let want: Vec<usize> = want.into_iter().map(|x| x.0).collect();
                assert_eq!(got, want);
            }
        }
    }
}
