use std::path::Path;
use std::process::{Command, Output};

use streetfuel::synthetic::{City, CitySpec, GridSpec};

fn streetfuel(args: &[&str], config: Option<&Path>, out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_streetfuel"));
    cmd.args(args).args(["--threads", "2"]).env("RUST_LOG", "info");
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    if let Some(o) = out {
        cmd.arg("--out").arg(o);
    }
    cmd.output().unwrap()
}

fn small_city(dir: &Path) -> std::path::PathBuf {
    let spec = CitySpec {
        grid: GridSpec::square(12, 150.0),
        trips: 300,
        route_length: (500.0, 1400.0),
        od_pairs_peak: 120,
        od_pairs_offpeak: 80,
        ..CitySpec::default()
    };
    City::generate(&spec).unwrap().write(dir).unwrap();
    dir.join("streetfuel.toml")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_network_file_is_a_config_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_city(dir.path());
    std::fs::remove_file(dir.path().join("nodes.csv")).unwrap();
    let o = streetfuel(&["clean"], Some(&config), None);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("nodes.csv"), "{}", stderr(&o));
}

#[test]
fn scenario_before_calibration_reports_the_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_city(dir.path());
    let o = streetfuel(&["scenario"], Some(&config), Some(&dir.path().join("fresh")));
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("calibrate"), "{}", stderr(&o));
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(streetfuel(&["frobnicate"], None, None).status.code(), Some(1));
    assert_eq!(streetfuel(&["clean", "--threads", "many"], None, None).status.code(), Some(1));
    let help = streetfuel(&["--help"], None, None);
    assert_eq!(help.status.code(), Some(0));
    let text = String::from_utf8_lossy(&help.stdout);
    for sub in ["clean", "match", "profiles", "calibrate", "assign", "fuelmap", "scenario", "all"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_city(dir.path());
    let mut text = std::fs::read_to_string(&config).unwrap();
    text.insert_str(0, "colour = \"blue\"\n");
    std::fs::write(&config, text).unwrap();
    let o = streetfuel(&["clean"], Some(&config), None);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn stages_run_one_at_a_time_and_record_manifests() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_city(dir.path());
    let out = dir.path().join("out");
    for stage in ["clean", "match", "profiles", "calibrate", "assign", "fuelmap", "scenario"] {
        let o = streetfuel(&[stage], Some(&config), Some(&out));
        assert!(o.status.success(), "{stage}: {}", stderr(&o));
        let manifest: serde_json::Value =
            serde_json::from_slice(&std::fs::read(out.join(format!("{stage}.manifest.json"))).unwrap()).unwrap();
        assert_eq!(manifest["stage"], stage);
        let outputs = manifest["outputs"].as_object().unwrap();
        assert!(!outputs.is_empty());
        for (name, hash) in outputs {
            let bytes = std::fs::read(out.join(name)).unwrap();
            assert_eq!(hash.as_str().unwrap().len(), 64, "{name}");
            assert!(!bytes.is_empty(), "{name}");
        }
    }
    for name in ["fuel_map_morning_peak.geojson", "savings_curves.csv", "scenario_summary.csv", "city_summary.csv"] {
        assert!(out.join(name).exists(), "{name}");
    }
}

#[test]
fn synth_writes_a_runnable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("city");
    let o = streetfuel(&["synth", "--trips", "50"], None, Some(&data));
    assert!(o.status.success(), "{}", stderr(&o));
    for name in ["nodes.csv", "edges.csv", "trips.csv", "fleet.csv", "streetfuel.toml"] {
        assert!(data.join(name).exists(), "{name}");
    }
    let o = streetfuel(&["clean"], Some(&data.join("streetfuel.toml")), Some(&dir.path().join("out")));
    assert!(o.status.success(), "{}", stderr(&o));
}
