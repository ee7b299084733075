//! Full pipeline on a synthetic city, then the trip-reduction curves: how much
//! fuel is saved by removing a fraction of trips at random versus removing
//! the least efficient trips first.

use streetfuel::io::csv_reader;
use streetfuel::pipeline::Pipeline;
use streetfuel::synthetic::{City, CitySpec, GridSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tmp = tempfile::tempdir()?;
    let spec = CitySpec {
        grid: GridSpec::square(20, 150.0),
        trips: 2500,
        route_length: (700.0, 2200.0),
        od_pairs_peak: 800,
        od_pairs_offpeak: 400,
        ..Default::default()
    };
    City::generate(&spec)?.write(tmp.path())?;
    let pipeline = Pipeline::new(streetfuel::config::PipelineConfig::load(&tmp.path().join("streetfuel.toml"))?);
    pipeline.run_all()?;

    let mut curves = csv_reader(&pipeline.artifact("savings_curves.csv"))?;
    println!("{:>18} {:>8} {:>8} {:>8}", "strategy", "removed", "saved", "stddev");
    for row in curves.records() {
        let row = row?;
        let removed: f64 = row[1].parse()?;
        let tenth = (removed * 10.0 - (removed * 10.0).round()).abs() < 1e-9;
        if tenth && removed <= 0.5 || (removed - 0.145).abs() < 1e-9 {
            println!("{:>18} {:>8.3} {:>8.4} {:>8.4}", &row[0], removed, row[2].parse::<f64>()?, row[3].parse::<f64>()?);
        }
    }

    let mut summary = csv_reader(&pipeline.artifact("scenario_summary.csv"))?;
    for row in summary.records() {
        let row = row?;
        println!("{:>34} {}", &row[0], &row[1]);
    }
    Ok(())
}
