//! Stage orchestration: each stage reads its inputs and upstream artifacts
//! from disk, writes its outputs atomically into the output directory, and
//! leaves a `<stage>.manifest.json` with the config echo and content digests.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde_json::json;

use crate::assignment::{align_flows, ita_assign, read_flows, OdMatrix};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::fuel::{calibrate, DoeCurve, DriveCycle, Fleet, DOE_MAX_MPH, DOE_MIN_MPH};
use crate::fuel_map::{export_geojson, quantile_classify, window_rates, write_summary};
use crate::ingest::{clean_trips, hourly_trip_rates, read_clean_trips, read_raw_trips, write_clean_trips};
use crate::matching::{match_all, read_routes, read_summaries, write_gaps, write_routes, write_summaries, MatchSummary};
use crate::network::RoadNetwork;
use crate::profiles::{extract_profiles, FeatureTable};
use crate::scenarios::{
    assign_bins, compare_travel_times, enumerate_trips, price_trips, savings_curve, verification_reports, write_curves,
    write_travel_times, write_trips, SavingsParams, Strategy,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Clean,
    Match,
    Profiles,
    Calibrate,
    Assign,
    FuelMap,
    Scenario,
}

impl Stage {
    pub const ALL: [Stage; 7] =
        [Stage::Clean, Stage::Match, Stage::Profiles, Stage::Calibrate, Stage::Assign, Stage::FuelMap, Stage::Scenario];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Clean => "clean",
            Stage::Match => "match",
            Stage::Profiles => "profiles",
            Stage::Calibrate => "calibrate",
            Stage::Assign => "assign",
            Stage::FuelMap => "fuelmap",
            Stage::Scenario => "scenario",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s}")))
    }
}

pub const CLEAN_TRIPS: &str = "clean_trips.csv";
pub const CLEANING_REPORT: &str = "cleaning_report.csv";
pub const HOURLY_RATES: &str = "hourly_rates.csv";
pub const MATCHED_ROUTES: &str = "matched_routes.csv";
pub const MATCH_GAPS: &str = "match_gaps.csv";
pub const MATCH_SUMMARY: &str = "match_summary.csv";
pub const MATCH_REPORT: &str = "match_report.csv";
pub const EDGE_FEATURES: &str = "edge_features.csv";
pub const CALIBRATED_MODEL: &str = "calibrated_model.csv";
pub const DOE_CURVE: &str = "doe_curve.csv";
pub const ASSIGNMENT_REPORT: &str = "assignment_report.csv";
pub const CITY_SUMMARY: &str = "city_summary.csv";
pub const QUANTILE_BREAKS: &str = "quantile_breaks.csv";
pub const SCENARIO_TRIPS: &str = "scenario_trips.csv";
pub const SAVINGS_CURVES: &str = "savings_curves.csv";
pub const TRAVEL_TIMES: &str = "travel_times.csv";
pub const SCENARIO_SUMMARY: &str = "scenario_summary.csv";

pub fn flows_file(window: &str) -> String {
    format!("flows_{window}.csv")
}

pub fn paths_file(window: &str) -> String {
    format!("paths_{window}.csv")
}

pub fn fuel_map_file(window: &str) -> String {
    format!("fuel_map_{window}.geojson")
}

/// What a stage read and wrote, for its manifest.
#[derive(Debug, Default)]
struct Io {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

pub struct Pipeline {
    config: PipelineConfig,
    out: PathBuf,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Self {
        let out = config.out_dir().to_path_buf();
        Self { config, out }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn artifact(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Path of an upstream artifact, or a [`Error::MissingArtifact`] naming the stage that makes it.
    fn upstream(&self, name: &str, stage: Stage) -> Result<PathBuf> {
        let p = self.artifact(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(Error::MissingArtifact { path: p, stage: stage.name() })
        }
    }

    pub fn run(&self, stage: Stage) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let started = Instant::now();
        log::info!("stage {stage}: start");
        let io = match stage {
            Stage::Clean => self.clean()?,
            Stage::Match => self.match_stage()?,
            Stage::Profiles => self.profiles()?,
            Stage::Calibrate => self.calibrate()?,
            Stage::Assign => self.assign()?,
            Stage::FuelMap => self.fuel_map()?,
            Stage::Scenario => self.scenario()?,
        };
        self.write_manifest(stage, &io)?;
        log::info!("stage {stage}: done in {:.2} s", started.elapsed().as_secs_f64());
        Ok(())
    }

    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.iter().try_for_each(|&s| self.run(s))
    }

    fn display_path(&self, p: &Path) -> String {
        p.strip_prefix(&self.out)
            .or_else(|_| p.strip_prefix(&self.config.root))
            .unwrap_or(p)
            .to_string_lossy()
            .replace('\\', "/")
    }

    fn write_manifest(&self, stage: Stage, io: &Io) -> Result<()> {
        let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
            paths.iter().map(|p| Ok((self.display_path(p), crate::io::sha256_file(p)?))).collect()
        };
        let config = serde_json::to_value(self.config.portable()).map_err(|e| Error::Config(e.to_string()))?;
        let manifest = json!({
            "stage": stage.name(),
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.config.seed,
            "config": config,
            "inputs": digests(&io.inputs)?,
            "outputs": digests(&io.outputs)?,
        });
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
        crate::io::write_atomic(&self.artifact(&format!("{stage}.manifest.json")), text.as_bytes())
    }

    fn network(&self, io: &mut Io) -> Result<RoadNetwork> {
        let inp = &self.config.inputs;
        io.inputs.extend([inp.nodes.clone(), inp.edges.clone()]);
        RoadNetwork::load(&inp.nodes, &inp.edges)
    }

    fn fleet(&self, io: &mut Io) -> Result<Fleet> {
        io.inputs.push(self.config.inputs.fleet.clone());
        Fleet::load_distribution(&self.config.inputs.fleet)
    }

    fn calibrated_fleet(&self, io: &mut Io) -> Result<Fleet> {
        let model = self.upstream(CALIBRATED_MODEL, Stage::Calibrate)?;
        let mut fleet = self.fleet(io)?;
        fleet.apply_model_csv(&model)?;
        io.inputs.push(model);
        Ok(fleet)
    }

    fn drive_cycle(&self, io: &mut Io) -> Result<DriveCycle> {
        match &self.config.inputs.drive_cycle {
            Some(p) => {
                io.inputs.push(p.clone());
                DriveCycle::load(p)
            }
            None => Ok(DriveCycle::ftp75()),
        }
    }

    fn doe_curve(&self, io: &mut Io) -> Result<DoeCurve> {
        match &self.config.inputs.doe_anchors {
            Some(p) => {
                io.inputs.push(p.clone());
                DoeCurve::load(p)
            }
            None => Ok(DoeCurve::bundled()),
        }
    }

    fn od(&self, label: &str, io: &mut Io) -> Result<OdMatrix> {
        let w = self
            .config
            .windows
            .iter()
            .find(|w| w.label == label)
            .ok_or_else(|| Error::Config(format!("no window {label}")))?;
        let path = w.od.as_ref().ok_or_else(|| Error::Config(format!("window {label} has no OD matrix")))?;
        io.inputs.push(path.clone());
        OdMatrix::load(path, label)?.peak_scale(w.peak_factor)
    }

    fn clean(&self) -> Result<Io> {
        let mut io = Io::default();
        let path = &self.config.inputs.trips;
        io.inputs.push(path.clone());
        let (raw, bad) = read_raw_trips(path)?;
        for (line, msg) in bad.iter().take(20) {
            log::warn!("{}:{line}: {msg}", path.display());
        }
        if raw.is_empty() {
            return Err(Error::InvalidInput(format!("{}: no usable trips", path.display())));
        }
        let (clean, report) = clean_trips(&raw, bad.len() as u64, &self.config.cleaning_params());
        log::info!(
            "cleaned {} of {} trips ({} case A, {} case B repairs, {} stays)",
            report.output,
            report.input,
            report.case_a_repairs,
            report.case_b_repairs,
            report.stays_excised
        );
        debug_assert!(report.reconciles());
        let out = [self.artifact(CLEAN_TRIPS), self.artifact(CLEANING_REPORT), self.artifact(HOURLY_RATES)];
        write_clean_trips(&out[0], &clean)?;
        report.write_csv(&out[1])?;
        let pickups: Vec<_> = raw.iter().map(|t| t.pickup).collect();
        hourly_trip_rates(&pickups, &self.config.calendar, self.config.utc_offset()).write_csv(&out[2])?;
        io.outputs.extend(out);
        Ok(io)
    }

    fn match_stage(&self) -> Result<Io> {
        let mut io = Io::default();
        let trips_file = self.upstream(CLEAN_TRIPS, Stage::Clean)?;
        let network = self.network(&mut io)?;
        io.inputs.push(trips_file.clone());
        let trips = read_clean_trips(&trips_file)?;
        let dense = network.densify(self.config.network.densify_m)?;
        log::info!("densified {} edges into {}", network.edge_count(), dense.edge_count());
        let routes: Vec<_> = match_all(&trips, &dense, &self.config.matching)
            .into_iter()
            .map(|r| r.collapse_to_parents(&dense))
            .collect();
        let summaries: Vec<MatchSummary> =
            routes.iter().zip(&trips).map(|(r, t)| MatchSummary::new(r, t, &network)).collect();

        let violations: usize = routes.iter().map(|r| r.connectivity_violations(&network)).sum();
        let hops: usize = trips.iter().map(|t| t.len().saturating_sub(1)).sum();
        let matched_hops: usize = routes.iter().map(|r| r.matched_hops()).sum();
        let full = summaries.iter().filter(|s| s.matched).count();
        log::info!("matched {matched_hops} of {hops} hops; {full} of {} trips fully", trips.len());

        let out = [
            self.artifact(MATCHED_ROUTES),
            self.artifact(MATCH_GAPS),
            self.artifact(MATCH_SUMMARY),
            self.artifact(MATCH_REPORT),
        ];
        write_routes(&out[0], &routes)?;
        write_gaps(&out[1], &routes)?;
        write_summaries(&out[2], &summaries)?;
        let mut w = crate::io::csv_writer(&out[3])?;
        w.row(["metric", "value"])?;
        for (k, v) in [
            ("trips", trips.len()),
            ("fully_matched_trips", full),
            ("hops", hops),
            ("matched_hops", matched_hops),
            ("traversals", routes.iter().map(|r| r.segments.len()).sum()),
            ("connectivity_violations", violations),
        ] {
            w.row([k.to_string(), v.to_string()])?;
        }
        w.finish()?;
        io.outputs.extend(out);
        Ok(io)
    }

    fn profiles(&self) -> Result<Io> {
        let mut io = Io::default();
        let routes_file = self.upstream(MATCHED_ROUTES, Stage::Match)?;
        let trips_file = self.upstream(CLEAN_TRIPS, Stage::Clean)?;
        io.inputs.extend([routes_file.clone(), trips_file.clone()]);
        let rows = read_routes(&routes_file)?;
        let trips = read_clean_trips(&trips_file)?;
        let set = extract_profiles(&rows, &trips, &self.config.time_windows(), &self.config.calendar());
        let table = set.mean_features(self.config.profiles.idle_ms);
        for label in table.windows() {
            log::info!("window {label}: {} profiled edges", table.window(label).map_or(0, |m| m.len()));
        }
        let out = self.artifact(EDGE_FEATURES);
        table.write_csv(&out)?;
        io.outputs.push(out);
        Ok(io)
    }

    fn calibrate(&self) -> Result<Io> {
        let mut io = Io::default();
        let mut fleet = self.fleet(&mut io)?;
        let cycle = self.drive_cycle(&mut io)?;
        let scales = calibrate(&mut fleet, &cycle, &self.config.calibration)?;
        log::debug!("bin scales {scales:?}");
        let model = self.artifact(CALIBRATED_MODEL);
        fleet.write_model_csv(&model, &cycle, self.config.calibration.idle_threshold)?;

        let doe = self.doe_curve(&mut io)?;
        let curve = self.artifact(DOE_CURVE);
        let mut w = crate::io::csv_writer(&curve)?;
        w.row(["mph", "mpg"])?;
        let mut mph = DOE_MIN_MPH;
        while mph <= DOE_MAX_MPH {
            w.row([mph.to_string(), doe.mpg(mph).to_string()])?;
            mph += 5.0;
        }
        w.finish()?;
        io.outputs.extend([model, curve]);
        Ok(io)
    }

    fn assign(&self) -> Result<Io> {
        let mut io = Io::default();
        let network = self.network(&mut io)?;
        let report = self.artifact(ASSIGNMENT_REPORT);
        let mut w = crate::io::csv_writer(&report)?;
        w.row(["window", "total_demand_vph", "assigned_vph", "dropped_vph", "unreachable_pairs"])?;
        for win in self.config.windows.iter().filter(|w| w.od.is_some()) {
            let od = self.od(&win.label, &mut io)?;
            let a = ita_assign(&network, &od, &self.config.assignment)?;
            log::info!(
                "window {}: assigned {:.1} of {:.1} veh/h",
                win.label,
                a.assigned_demand,
                od.total_demand()
            );
            let flows = self.artifact(&flows_file(&win.label));
            let paths = self.artifact(&paths_file(&win.label));
            a.write_flows(&flows)?;
            a.write_ledger(&paths, &network)?;
            io.outputs.extend([flows, paths]);
            w.row([
                win.label.clone(),
                od.total_demand().to_string(),
                a.assigned_demand.to_string(),
                a.dropped_demand.to_string(),
                a.unreachable_pairs.to_string(),
            ])?;
        }
        w.finish()?;
        io.outputs.push(report);
        Ok(io)
    }

    fn fuel_map(&self) -> Result<Io> {
        let mut io = Io::default();
        let features_file = self.upstream(EDGE_FEATURES, Stage::Profiles)?;
        let fleet = self.calibrated_fleet(&mut io)?;
        let network = self.network(&mut io)?;
        io.inputs.push(features_file.clone());
        let features = FeatureTable::read_csv(&features_file)?;

        let mut summaries = Vec::new();
        let mut breaks = Vec::new();
        for win in self.config.windows.iter().filter(|w| w.od.is_some()) {
            let flows_path = self.upstream(&flows_file(&win.label), Stage::Assign)?;
            let flows = align_flows(&network, &read_flows(&flows_path)?)?;
            io.inputs.push(flows_path);
            let (mut rates, summary) = window_rates(&network, &win.label, &flows, &features, &fleet)?;
            if rates.is_empty() {
                log::warn!("window {}: no flow-carrying edge has a speed profile", win.label);
            } else {
                let c = quantile_classify(&mut rates, self.config.fuel_map.classes)?;
                if c.degenerate {
                    log::warn!("window {}: quantile breaks collapse; fewer than {} classes", win.label, self.config.fuel_map.classes);
                }
                breaks.push((win.label.clone(), c.breaks));
            }
            log::info!(
                "window {}: {:.1} L/h over {} edges, coverage {:.3}",
                win.label,
                summary.total_liters_per_hour,
                rates.len(),
                summary.coverage_fraction
            );
            let geo = self.artifact(&fuel_map_file(&win.label));
            export_geojson(&geo, &rates, &network)?;
            io.outputs.push(geo);
            summaries.push(summary);
        }
        let summary = self.artifact(CITY_SUMMARY);
        write_summary(&summary, &summaries)?;
        let bfile = self.artifact(QUANTILE_BREAKS);
        let mut w = crate::io::csv_writer(&bfile)?;
        w.row(["window", "class", "upper_bound"])?;
        for (label, b) in &breaks {
            for (i, v) in b.iter().enumerate() {
                w.row([label.clone(), (i + 1).to_string(), v.to_string()])?;
            }
        }
        w.finish()?;
        io.outputs.extend([summary, bfile]);
        Ok(io)
    }

    fn scenario(&self) -> Result<Io> {
        let mut io = Io::default();
        let win = self
            .config
            .scenario_window()
            .ok_or_else(|| Error::Config("scenario needs a window with an OD matrix".into()))?
            .label
            .clone();
        let fleet = self.calibrated_fleet(&mut io)?;
        let features_file = self.upstream(EDGE_FEATURES, Stage::Profiles)?;
        let flows_path = self.upstream(&flows_file(&win), Stage::Assign)?;
        let summary_file = self.upstream(MATCH_SUMMARY, Stage::Match)?;
        let network = self.network(&mut io)?;
        let doe = self.doe_curve(&mut io)?;
        let od = self.od(&win, &mut io)?;
        io.inputs.extend([features_file.clone(), flows_path.clone(), summary_file.clone(), self.config.inputs.trips.clone()]);

        let features = FeatureTable::read_csv(&features_file)?;
        let flows = align_flows(&network, &read_flows(&flows_path)?)?;
        let times: Vec<f64> = flows.iter().map(|f| f.congested_time).collect();
        let mut trips = enumerate_trips(&network, &od, &times)?;
        if trips.is_empty() {
            return Err(Error::InvalidInput(format!("window {win}: OD matrix yields no trips")));
        }
        assign_bins(&mut trips, &fleet, self.config.seed)?;
        price_trips(&mut trips, &network, features.window(&win), &fleet, &doe)?;
        let flagged = trips.iter().filter(|t| t.flagged).count();
        log::info!("{} trips simulated in {win}; {flagged} crossed unprofiled edges", trips.len());

        let params = SavingsParams {
            grid: self.config.scenario.grid.clone(),
            seeds: self.config.scenario.seeds,
            seed: self.config.seed,
            normalization: self.config.scenario.normalization,
        };
        let curves = Strategy::ALL
            .iter()
            .map(|&s| savings_curve(&trips, s, &params))
            .collect::<Result<Vec<_>>>()?;

        let (raw, _) = read_raw_trips(&self.config.inputs.trips)?;
        let matches = read_summaries(&summary_file)?;
        let verification = verification_reports(&self.out, &trips, &raw, &matches, &fleet)?;
        let (_, r) = compare_travel_times(&trips);

        let out = [
            self.artifact(SCENARIO_TRIPS),
            self.artifact(SAVINGS_CURVES),
            self.artifact(TRAVEL_TIMES),
            self.artifact(SCENARIO_SUMMARY),
            self.artifact("distance_histogram.csv"),
            self.artifact("travel_time_histogram.csv"),
            self.artifact("fuel_economy_histogram.csv"),
        ];
        write_trips(&out[0], &trips)?;
        write_curves(&out[1], &curves)?;
        write_travel_times(&out[2], &trips)?;

        let total_profile: f64 = trips.iter().map(|t| t.fuel_profile).sum();
        let total_constant: f64 = trips.iter().map(|t| t.fuel_constant).sum();
        let mut rows: Vec<(String, String)> = vec![
            ("window".into(), win.clone()),
            ("trips".into(), trips.len().to_string()),
            ("flagged_trips".into(), flagged.to_string()),
            ("fuel_profile_l".into(), total_profile.to_string()),
            ("fuel_constant_l".into(), total_constant.to_string()),
            ("travel_time_correlation".into(), r.map_or("nan".into(), |r| r.to_string())),
            ("distance_overlap".into(), verification.distance_overlap.to_string()),
            ("matched_trips".into(), verification.matched_trips.to_string()),
            ("free_flow_not_slower".into(), verification.free_flow_not_slower.to_string()),
        ];
        for c in &curves {
            if let Some(p) = c.at(0.145) {
                rows.push((format!("saved_at_0.145_{}", c.strategy.name()), p.fuel_saved_fraction.to_string()));
            }
        }
        let mut w = crate::io::csv_writer(&out[3])?;
        w.row(["metric", "value"])?;
        for (k, v) in rows {
            w.row([k, v])?;
        }
        w.finish()?;
        io.outputs.extend(out);
        Ok(io)
    }
}
