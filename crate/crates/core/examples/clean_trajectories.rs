//! Clean raw GPS trips: interval inference, region filter, spike repair and
//! stay splitting, with the reconciling report.
//!
//! `cargo run --example clean_trajectories [trips.csv]`; defaults to a
//! synthetic batch with injected faults.

use streetfuel::ingest::{clean_trips, read_raw_trips, segment_speeds, CleaningParams};
use streetfuel::synthetic::{City, CitySpec, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (raw, malformed, region) = match std::env::args().nth(1) {
        Some(path) => {
            let (trips, bad) = read_raw_trips(path.as_ref())?;
            (trips, bad.len() as u64, None)
        }
        None => {
            let spec = CitySpec { grid: GridSpec::square(16, 150.0), trips: 600, route_length: (600.0, 1800.0), ..Default::default() };
            let city = City::generate(&spec)?;
            (city.trips, 0, Some(spec.grid.bounds(500.0)))
        }
    };

    let params = CleaningParams { region, ..Default::default() };
    let (clean, report) = clean_trips(&raw, malformed, &params);
    for (name, count) in report.rows() {
        println!("{name:>28} {count}");
    }
    assert!(report.reconciles());

    let fastest = clean.iter().flat_map(segment_speeds).fold(0.0, f64::max) * 3.6;
    println!("fastest segment after cleaning: {fastest:.1} km/h");
    if let Some(t) = clean.iter().find(|t| t.parent_trip.is_some()) {
        println!(
            "{} was split out of {} around a stay ({} points, {:.0} s)",
            t.trip_id,
            t.parent_trip.as_deref().unwrap_or_default(),
            t.len(),
            t.duration()
        );
    }
    Ok(())
}
