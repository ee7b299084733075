//! Pipeline configuration, read from a TOML file.
//!
//! Every threshold has a default, so a config only needs the input paths and
//! anything it wants to change. Relative paths resolve against the directory
//! holding the config file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{FixedOffset, Weekday};
use serde::{Deserialize, Serialize};

use crate::assignment::AssignParams;
use crate::error::{Error, Result};
use crate::fuel::CalibrationOptions;
use crate::geo::BoundingBox;
use crate::ingest::{CalendarTag, CleaningParams, RepairParams, StayParams, DEFAULT_SPIKE_KMH};
use crate::matching::MatchParams;
use crate::profiles::{Calendar, DayFilter, TimeWindow, DEFAULT_IDLE_THRESHOLD};
use crate::scenarios::Normalization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Output directory; defaults to `out` beside the config file.
    #[serde(skip_serializing)]
    pub out_dir: Option<PathBuf>,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub root: PathBuf,
    pub inputs: Inputs,
    pub region: Option<BoundingBox>,
    pub cleaning: CleaningConfig,
    pub network: NetworkConfig,
    pub matching: MatchParams,
    pub profiles: ProfileConfig,
    pub windows: Vec<WindowConfig>,
    pub calendar: Vec<CalendarTag>,
    pub assignment: AssignParams,
    pub calibration: CalibrationOptions,
    pub fuel_map: FuelMapConfig,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub nodes: PathBuf,
    pub edges: PathBuf,
    pub trips: PathBuf,
    /// `bin_id,probability` rows.
    pub fleet: PathBuf,
    /// Defaults to the bundled FTP-75 cycle.
    pub drive_cycle: Option<PathBuf>,
    /// Defaults to the bundled fuel-economy-vs-speed anchors.
    pub doe_anchors: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningConfig {
    pub spike_kmh: f64,
    pub max_passes: usize,
    pub max_inserted: u32,
    pub stay_min_s: f64,
    pub stay_radius_m: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        let r = RepairParams::default();
        let s = StayParams::default();
        Self {
            spike_kmh: DEFAULT_SPIKE_KMH,
            max_passes: r.max_passes,
            max_inserted: r.max_inserted,
            stay_min_s: s.min_duration,
            stay_radius_m: s.max_radius,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Maximum sub-edge length after densification, meters.
    pub densify_m: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { densify_m: crate::network::DEFAULT_MAX_SPACING_M }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileConfig {
    pub idle_ms: f64,
    /// Local time offset from UTC used to place trips in windows.
    pub utc_offset_minutes: i32,
    pub weekend: Vec<Weekday>,
}

impl Default for ProfileConfig {
    fn default() -> Self {
        Self { idle_ms: DEFAULT_IDLE_THRESHOLD, utc_offset_minutes: 0, weekend: vec![Weekday::Sat, Weekday::Sun] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub label: String,
    #[serde(default = "weekdays")]
    pub days: DayFilter,
    pub start_hour: u32,
    pub end_hour: u32,
    /// Multiplier applied to the OD demand before assignment.
    #[serde(default = "unit")]
    pub peak_factor: f64,
    /// OD matrix for the window; windows without one are profiled but not assigned.
    #[serde(default)]
    pub od: Option<PathBuf>,
}

fn weekdays() -> DayFilter {
    DayFilter::Weekday
}

fn unit() -> f64 {
    1.0
}

impl WindowConfig {
    pub fn window(&self) -> TimeWindow {
        TimeWindow::new(&self.label, self.days, self.start_hour, self.end_hour)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuelMapConfig {
    pub classes: usize,
}

impl Default for FuelMapConfig {
    fn default() -> Self {
        Self { classes: crate::fuel_map::DEFAULT_CLASSES }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Window whose OD and profiles drive the trip simulation; defaults to the first with an OD.
    pub window: Option<String>,
    pub seeds: usize,
    pub grid: Vec<f64>,
    pub normalization: Normalization,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let s = crate::scenarios::SavingsParams::default();
        Self { window: None, seeds: s.seeds, grid: s.grid, normalization: s.normalization }
    }
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let windows = TimeWindow::defaults()
            .into_iter()
            .map(|w| WindowConfig {
                peak_factor: if w.label.contains("peak") && !w.label.contains("offpeak") { 1.5 } else { 1.0 },
                label: w.label,
                days: w.days,
                start_hour: w.start_hour,
                end_hour: w.end_hour,
                od: None,
            })
            .collect();
        Self {
            seed: 0,
            out_dir: None,
            root: PathBuf::new(),
            inputs: Inputs::default(),
            region: None,
            cleaning: CleaningConfig::default(),
            network: NetworkConfig::default(),
            matching: MatchParams::default(),
            profiles: ProfileConfig::default(),
            windows,
            calendar: Vec::new(),
            assignment: AssignParams::default(),
            calibration: CalibrationOptions::default(),
            fuel_map: FuelMapConfig::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    /// Parses, resolves relative paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Makes every relative path absolute against `base`; the output directory
    /// defaults to `base/out`.
    pub fn resolve(&mut self, base: &Path) {
        self.root = base.to_path_buf();
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.nodes);
        fix(&mut self.inputs.edges);
        fix(&mut self.inputs.trips);
        fix(&mut self.inputs.fleet);
        self.inputs.drive_cycle.iter_mut().for_each(fix);
        self.inputs.doe_anchors.iter_mut().for_each(fix);
        for w in &mut self.windows {
            w.od.iter_mut().for_each(fix);
        }
        match &mut self.out_dir {
            Some(d) => fix(d),
            None => self.out_dir = Some(base.join("out")),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.cleaning;
        positive("cleaning.spike_kmh", c.spike_kmh)?;
        positive("cleaning.stay_min_s", c.stay_min_s)?;
        positive("cleaning.stay_radius_m", c.stay_radius_m)?;
        if c.max_passes == 0 {
            return Err(Error::Config("cleaning.max_passes must be at least 1".into()));
        }
        positive("network.densify_m", self.network.densify_m)?;
        positive("matching.radius", self.matching.radius)?;
        positive("matching.penalty_rate", self.matching.penalty_rate)?;
        positive("matching.budget_factor", self.matching.budget_factor)?;
        positive("profiles.idle_ms", self.profiles.idle_ms)?;
        positive("calibration.idle_threshold", self.calibration.idle_threshold)?;
        if self.profiles.utc_offset_minutes.abs() >= 24 * 60 {
            return Err(Error::Config("profiles.utc_offset_minutes must be within ±24 h".into()));
        }
        if self.fuel_map.classes == 0 {
            return Err(Error::Config("fuel_map.classes must be at least 1".into()));
        }
        if self.scenario.seeds == 0 {
            return Err(Error::Config("scenario.seeds must be at least 1".into()));
        }
        if let Some(f) = self.scenario.grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::Config(format!("scenario.grid fraction {f} outside [0, 1]")));
        }
        self.assignment.validate()?;
        if let Some(r) = &self.region {
            if !r.is_valid() {
                return Err(Error::Config("region bounding box is empty".into()));
            }
        }

        if self.windows.is_empty() {
            return Err(Error::Config("at least one window is required".into()));
        }
        let mut labels = BTreeSet::new();
        for w in &self.windows {
            w.window().validate()?;
            positive(&format!("window {} peak_factor", w.label), w.peak_factor)?;
            if w.label.is_empty() || !w.label.chars().all(|ch| ch.is_ascii_alphanumeric() || ch == '_' || ch == '-') {
                return Err(Error::Config(format!("window label {:?} must be non-empty [A-Za-z0-9_-]", w.label)));
            }
            if !labels.insert(w.label.as_str()) {
                return Err(Error::Config(format!("duplicate window label {}", w.label)));
            }
        }
        if let Some(s) = &self.scenario.window {
            let w = self.windows.iter().find(|w| &w.label == s);
            if !w.is_some_and(|w| w.od.is_some()) {
                return Err(Error::Config(format!("scenario.window {s} is not a window with an OD matrix")));
            }
        }

        let mut files = vec![
            ("inputs.nodes", &self.inputs.nodes),
            ("inputs.edges", &self.inputs.edges),
            ("inputs.trips", &self.inputs.trips),
            ("inputs.fleet", &self.inputs.fleet),
        ];
        files.extend(self.inputs.drive_cycle.iter().map(|p| ("inputs.drive_cycle", p)));
        files.extend(self.inputs.doe_anchors.iter().map(|p| ("inputs.doe_anchors", p)));
        files.extend(self.windows.iter().filter_map(|w| w.od.as_ref().map(|p| ("window od", p))));
        for (name, p) in files {
            if p.as_os_str().is_empty() {
                return Err(Error::Config(format!("{name} is not set")));
            }
            if !p.is_file() {
                return Err(Error::Config(format!("{name}: file not found: {}", p.display())));
            }
        }
        Ok(())
    }

    /// A copy with every input path shown relative to [`PipelineConfig::root`]
    /// where possible, so echoes do not depend on where the data lives.
    pub fn portable(&self) -> Self {
        let mut c = self.clone();
        let rel = |p: &mut PathBuf| {
            if let Ok(r) = p.strip_prefix(&self.root) {
                *p = r.to_path_buf();
            }
        };
        rel(&mut c.inputs.nodes);
        rel(&mut c.inputs.edges);
        rel(&mut c.inputs.trips);
        rel(&mut c.inputs.fleet);
        c.inputs.drive_cycle.iter_mut().for_each(rel);
        c.inputs.doe_anchors.iter_mut().for_each(rel);
        for w in &mut c.windows {
            w.od.iter_mut().for_each(rel);
        }
        c.out_dir = None;
        c
    }

    pub fn out_dir(&self) -> &Path {
        self.out_dir.as_deref().unwrap_or(Path::new("out"))
    }

    pub fn cleaning_params(&self) -> CleaningParams {
        CleaningParams {
            repair: RepairParams {
                threshold_kmh: self.cleaning.spike_kmh,
                max_passes: self.cleaning.max_passes,
                max_inserted: self.cleaning.max_inserted,
            },
            stays: StayParams { min_duration: self.cleaning.stay_min_s, max_radius: self.cleaning.stay_radius_m },
            region: self.region,
        }
    }

    pub fn calendar(&self) -> Calendar {
        Calendar {
            offset: self.utc_offset(),
            weekend: self.profiles.weekend.clone(),
        }
    }

    pub fn utc_offset(&self) -> FixedOffset {
        FixedOffset::east_opt(self.profiles.utc_offset_minutes * 60).expect("offset validated")
    }

    pub fn time_windows(&self) -> Vec<TimeWindow> {
        self.windows.iter().map(WindowConfig::window).collect()
    }

    /// The window that drives trip simulation.
    pub fn scenario_window(&self) -> Option<&WindowConfig> {
        match &self.scenario.window {
            Some(label) => self.windows.iter().find(|w| &w.label == label),
            None => self.windows.iter().find(|w| w.od.is_some()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_inputs(dir: &Path) {
        for f in ["nodes.csv", "edges.csv", "trips.csv", "fleet.csv", "od.csv"] {
            std::fs::write(dir.join(f), "x\n").unwrap();
        }
    }

    const MINIMAL: &str = r#"
        [inputs]
        nodes = "nodes.csv"
        edges = "edges.csv"
        trips = "trips.csv"
        fleet = "fleet.csv"
    "#;

    #[test]
    fn minimal_config_takes_defaults() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let p = dir.path().join("c.toml");
        std::fs::write(&p, MINIMAL).unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.cleaning.spike_kmh, 160.0);
        assert_eq!(c.cleaning.stay_min_s, 2200.0);
        assert_eq!(c.cleaning.stay_radius_m, 10.0);
        assert_eq!(c.matching.radius, 25.0);
        assert_eq!(c.matching.penalty_rate, 1.0);
        assert_eq!(c.assignment.increments, vec![0.4, 0.3, 0.2, 0.1]);
        assert_eq!(c.windows.len(), 3);
        assert_eq!(c.windows[0].peak_factor, 1.5);
        assert_eq!(c.windows[1].peak_factor, 1.0);
        assert_eq!(c.out_dir(), dir.path().join("out"));
        assert!(c.inputs.nodes.is_absolute());
    }

    #[test]
    fn missing_file_names_path() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        std::fs::remove_file(dir.path().join("edges.csv")).unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, MINIMAL).unwrap();
        let err = PipelineConfig::load(&p).unwrap_err().to_string();
        assert!(err.contains("edges.csv"), "{err}");
    }

    #[test]
    fn rejects_bad_values() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let p = dir.path().join("c.toml");
        for extra in [
            "[cleaning]\nspike_kmh = 0\n",
            "[matching]\nradius = -1\n",
            "bogus = 1\n",
            "[[windows]]\nlabel = \"a\"\nstart_hour = 8\nend_hour = 9\n[[windows]]\nlabel = \"a\"\nstart_hour = 9\nend_hour = 10\n",
            "[[windows]]\nlabel = \"a\"\nstart_hour = 9\nend_hour = 9\n",
            "[assignment]\nincrements = [0.5, 0.4]\n",
        ] {
            let text = format!("{extra}\n{MINIMAL}");
            std::fs::write(&p, text).unwrap();
            assert!(matches!(PipelineConfig::load(&p), Err(Error::Config(_))), "{extra}");
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path());
        let p = dir.path().join("c.toml");
        std::fs::write(
            &p,
            format!("seed = 7\n{MINIMAL}\n[[windows]]\nlabel = \"am\"\nstart_hour = 7\nend_hour = 9\npeak_factor = 1.5\nod = \"od.csv\"\n"),
        )
        .unwrap();
        let c = PipelineConfig::load(&p).unwrap();
        assert_eq!(c.scenario_window().unwrap().label, "am");
        let again: PipelineConfig = toml::from_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again.windows, c.windows);
        assert_eq!(again.seed, 7);
    }
}
