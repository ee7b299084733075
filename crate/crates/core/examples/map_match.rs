//! Drive known routes on a grid, sample them as noisy 5 s GPS and map-match
//! the samples back onto the densified network.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use streetfuel::ingest::{parse_timestamp, CleanTrip, TrackPoint};
use streetfuel::matching::{free_flow_time, MatchParams, Matcher};
use streetfuel::synthetic::{drive, grid_network, random_route, random_stops, sample, GridSpec, Kinematics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = grid_network(&GridSpec::square(15, 150.0))?;
    let dense = net.densify(10.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let kin = Kinematics::default();
    let start = parse_timestamp("2016-05-24T07:30:00Z").unwrap();
    let mut matcher = Matcher::new(&dense, MatchParams::default());

    for n in 0..5 {
        let Some(route) = random_route(&net, &mut rng, 900.0, 2000.0) else { continue };
        let stops = random_stops(&net, &route, &kin, &mut rng);
        let track = drive(&net, &route, &stops, &kin);
        let fixes = sample(&track, 5, 5.0, &mut rng);
        let trip = CleanTrip {
            trip_id: format!("demo{n}"),
            parent_trip: None,
            start,
            interval: 5.0,
            points: fixes.into_iter().enumerate().map(|(i, pos)| TrackPoint { slot: i as u32, pos }).collect(),
        };

        let matched = matcher.match_trip(&trip).collapse_to_parents(&dense);
        let truth = net.edge_ids(&route);
        let got = matched.edge_sequence();
        let hit = truth.iter().filter(|e| got.contains(e)).count();
        println!(
            "{}: {} fixes, {}/{} true edges recovered, {} gap hops, observed {:.0} s vs free-flow {:.0} s",
            trip.trip_id,
            trip.len(),
            hit,
            truth.len(),
            matched.gap_hops(),
            trip.duration(),
            free_flow_time(&matched, &net)
        );
        for s in matched.segments.iter().take(3) {
            println!("    edge {:>5}  {:6.1} s → {:6.1} s", s.edge, s.entry, s.exit);
        }
    }
    Ok(())
}
