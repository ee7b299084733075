//! Incremental traffic assignment: a two-route corridor where the direct road
//! saturates, then a synthetic city's peak-hour demand.

use streetfuel::assignment::{ita_assign, AssignParams, OdEntry, OdMatrix};
use streetfuel::geo::{destination, LatLon};
use streetfuel::network::{Edge, Node, RoadNetwork};
use streetfuel::synthetic::{City, CitySpec, GridSpec};

fn corridor() -> streetfuel::Result<RoadNetwork> {
    let o = LatLon::new(24.7, 46.7);
    let node = |id: u64, east: f64| Node { id, position: destination(o, 90.0, east) };
    let edge = |id, from, to, length: f64, capacity| Edge { id, from, to, length, free_flow_speed: 10.0, capacity, parent: id };
    RoadNetwork::new(
        vec![node(1, 0.0), node(2, 100.0), node(3, 50.0)],
        vec![edge(1, 1, 2, 100.0, 500.0), edge(2, 1, 3, 55.0, 10_000.0), edge(3, 3, 2, 55.0, 10_000.0)],
    )
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = corridor()?;
    let od = OdMatrix::new("demo", vec![OdEntry { origin: 1, dest: 2, demand: 1000.0 }])?;
    let a = ita_assign(&net, &od, &AssignParams::default())?;
    for (k, times) in a.history.iter().enumerate() {
        println!("after increment {}: direct {:.3} s, detour {:.3} s", k + 1, times[0], times[1] + times[2]);
    }
    for f in &a.flows {
        println!("edge {}: {:.0} veh/h, {:.2} s", f.edge_id, f.flow, f.congested_time);
    }

    let spec = CitySpec { grid: GridSpec::square(20, 150.0), trips: 0, od_pairs_peak: 600, ..Default::default() };
    let city = City::generate(&spec)?;
    let (label, od) = &city.od[0];
    let a = ita_assign(&city.network, &od.peak_scale(1.5)?, &AssignParams::default())?;
    let busiest = a.flows.iter().max_by(|x, y| x.flow.total_cmp(&y.flow)).unwrap();
    println!(
        "{label}: {:.1} veh/h assigned, {:.1} dropped ({} unreachable pairs); busiest edge {} carries {:.0} veh/h",
        a.assigned_demand, a.dropped_demand, a.unreachable_pairs, busiest.edge_id, busiest.flow
    );
    Ok(())
}
