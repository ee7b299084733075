//! Load a road network from CSV, split it into ≤10 m sub-edges and route on it.
//!
//! `cargo run --example load_and_densify [nodes.csv edges.csv]`; without
//! arguments a small synthetic grid is written to a temp dir and loaded back.

use std::path::PathBuf;

use streetfuel::network::RoadNetwork;
use streetfuel::synthetic::{grid_network, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let tmp = tempfile::tempdir()?;
    let (nodes, edges) = match args.as_slice() {
        [n, e] => (n.clone(), e.clone()),
        _ => {
            let (n, e) = (tmp.path().join("nodes.csv"), tmp.path().join("edges.csv"));
            grid_network(&GridSpec::square(8, 150.0))?.write_csv(&n, &e)?;
            (n, e)
        }
    };

    let net = RoadNetwork::load(&nodes, &edges)?;
    println!(
        "loaded {} nodes, {} edges, {:.1} km of road, weakly connected: {}",
        net.node_count(),
        net.edge_count(),
        net.total_length() / 1000.0,
        net.is_weakly_connected()
    );

    let dense = net.densify(10.0)?;
    println!("densified to {} nodes, {} sub-edges", dense.node_count(), dense.edge_count());

    let (src, dst) = (net.nodes()[0].id, net.nodes()[net.node_count() - 1].id);
    let free = |e: &streetfuel::network::Edge| e.free_flow_time();
    if let Some(route) = net.fastest_path(src, dst, free)? {
        println!("fastest {src} → {dst}: {:.1} s over {} edges", route.time, route.edges.len());
    }
    if let Some(route) = dense.fastest_path(src, dst, free)? {
        println!("same trip on the dense graph: {:.1} s over {} sub-edges", route.time, route.edges.len());
    }
    Ok(())
}
