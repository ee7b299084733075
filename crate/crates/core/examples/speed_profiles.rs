//! From matched GPS trips to per-edge speed profiles and mean features for
//! each time window.

use streetfuel::ingest::clean_trips;
use streetfuel::matching::{match_all, SegmentRow};
use streetfuel::profiles::{extract_profiles, features, SpeedSignal};
use streetfuel::synthetic::{City, CitySpec, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = CitySpec { grid: GridSpec::square(12, 150.0), trips: 800, route_length: (500.0, 1400.0), ..Default::default() };
    let city = City::generate(&spec)?;
    let config = city.config();
    let (trips, _) = clean_trips(&city.trips, 0, &config.cleaning_params());

    let dense = city.network.densify(config.network.densify_m)?;
    let routes = match_all(&trips, &dense, &config.matching);
    let rows: Vec<SegmentRow> = routes.iter().flat_map(|r| r.collapse_to_parents(&dense).rows().collect::<Vec<_>>()).collect();

    // One trip's speed signal, sampled over its first matched edge.
    if let Some(first) = rows.first() {
        let trip = trips.iter().find(|t| t.trip_id == first.trip_id).unwrap();
        let samples = SpeedSignal::from_trip(trip).sample(first.entry_s, first.exit_s);
        let f = features(&samples, config.profiles.idle_ms)?;
        println!(
            "{} on edge {}: {} samples, moving {:.1} s, idle {:.1} s, {:.3} km",
            first.trip_id,
            first.edge_id,
            samples.len(),
            f.t_move,
            f.t_idle,
            f.length
        );
    }

    let set = extract_profiles(&rows, &trips, &config.time_windows(), &config.calendar());
    println!("{} traversals kept across {} windows", set.traversal_count(), set.windows.len());
    let table = set.mean_features(config.profiles.idle_ms);
    for w in table.windows() {
        let edges = table.window(w).unwrap();
        let busiest = edges.iter().max_by_key(|(_, e)| e.n_traversals).unwrap();
        println!(
            "{w:>16}: {} edges profiled; edge {} seen {} times, mean idle {:.1} s, ∫|a|dx {:.1}",
            edges.len(),
            busiest.0,
            busiest.1.n_traversals,
            busiest.1.mean.t_idle,
            busiest.1.mean.accel_integral
        );
    }
    Ok(())
}
