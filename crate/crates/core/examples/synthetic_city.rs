//! Generate the synthetic city used throughout the tests and write it as a
//! ready-to-run dataset: `cargo run --release --example synthetic_city -- <dir> [trips]`.

use streetfuel::synthetic::{City, CitySpec, Injected};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = args.next().unwrap_or_else(|| "city".into());
    let trips = args.next().map(|s| s.parse()).transpose()?.unwrap_or(CitySpec::default().trips);

    let city = City::generate(&CitySpec { trips, ..Default::default() })?;
    city.write(dir.as_ref())?;
    println!("{} nodes, {} edges, {} trips → {dir}", city.network.node_count(), city.network.edge_count(), city.trips.len());
    for kind in [Injected::MissingPoints, Injected::Teleport, Injected::Stay, Injected::OutsideRegion] {
        println!("  {kind:?}: {}", city.injected.iter().filter(|&&k| k == kind).count());
    }
    for (label, od) in &city.od {
        println!("  od_{label}.csv: {} pairs, {:.0} veh/h", od.entries.len(), od.total_demand());
    }
    println!("run it with: streetfuel all --config {dir}/streetfuel.toml");
    Ok(())
}
