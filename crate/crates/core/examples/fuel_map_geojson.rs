//! Run the pipeline through the fuel-map stage on a small synthetic city and
//! summarise the exported GeoJSON layers.
//!
//! `cargo run --release --example fuel_map_geojson [out_dir]`

use streetfuel::pipeline::{fuel_map_file, Pipeline, Stage};
use streetfuel::synthetic::{City, CitySpec, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let data = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| tmp.path().to_path_buf());
    let spec = CitySpec {
        grid: GridSpec::square(16, 150.0),
        trips: 1500,
        route_length: (600.0, 1800.0),
        od_pairs_peak: 300,
        od_pairs_offpeak: 200,
        ..Default::default()
    };
    let city = City::generate(&spec)?;
    city.write(&data)?;

    let pipeline = Pipeline::new(streetfuel::config::PipelineConfig::load(&data.join("streetfuel.toml"))?);
    for stage in [Stage::Clean, Stage::Match, Stage::Profiles, Stage::Calibrate, Stage::Assign, Stage::FuelMap] {
        pipeline.run(stage)?;
    }

    for w in pipeline.config().time_windows() {
        let path = pipeline.artifact(&fuel_map_file(&w.label));
        let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
        let features = doc["features"].as_array().cloned().unwrap_or_default();
        let mut per_class = [0usize; 5];
        let mut total = 0.0;
        for f in &features {
            let p = &f["properties"];
            per_class[p["class"].as_u64().unwrap() as usize - 1] += 1;
            total += p["flow_vph"].as_f64().unwrap() * p["fcr_lpc"].as_f64().unwrap();
        }
        println!("{}: {} edges, {total:.1} L/h, edges per class {per_class:?}", path.display(), features.len());
    }
    println!("{}", std::fs::read_to_string(pipeline.artifact("city_summary.csv"))?);
    Ok(())
}
