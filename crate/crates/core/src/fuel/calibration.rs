use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{fc_with, Fleet, FuelEconomyBin, KM_PER_MILE, LITERS_PER_GALLON};
use crate::error::{Error, Result};
use crate::profiles::{features, ProfileFeatures, DEFAULT_IDLE_THRESHOLD};

const FTP75_CSV: &str = include_str!("../../assets/ftp75.csv");

/// A 1 Hz (or any strictly increasing) speed trace.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveCycle {
    pub name: String,
    pub samples: Vec<(f64, f64)>,
}

#[derive(Deserialize)]
struct CycleRow {
    t_s: f64,
    v_ms: f64,
}

impl DriveCycle {
    /// The EPA FTP-75 urban cycle bundled with the crate.
    pub fn ftp75() -> Self {
        Self::from_reader("FTP-75", FTP75_CSV.as_bytes()).expect("bundled FTP-75 cycle is valid")
    }

    /// Reads `t_s,v_ms`.
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<CycleRow> = crate::io::read_csv(path)?;
        let name = path.file_stem().map_or("cycle".into(), |s| s.to_string_lossy().into_owned());
        Self::new(&name, rows.into_iter().map(|r| (r.t_s, r.v_ms)).collect())
    }

    fn from_reader(name: &str, bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let mut samples = Vec::new();
        for row in rdr.deserialize::<CycleRow>() {
            let r = row.map_err(|e| Error::InvalidInput(format!("drive cycle {name}: {e}")))?;
            samples.push((r.t_s, r.v_ms));
        }
        Self::new(name, samples)
    }

    pub fn new(name: &str, samples: Vec<(f64, f64)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidInput(format!("drive cycle {name} has fewer than 2 samples")));
        }
        if samples.windows(2).any(|w| w[1].0 <= w[0].0) || samples.iter().any(|s| s.1 < 0.0) {
            return Err(Error::InvalidInput(format!(
                "drive cycle {name}: times must increase strictly and speeds be non-negative"
            )));
        }
        Ok(Self { name: name.to_string(), samples })
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].0 - self.samples[0].0
    }

    pub fn features(&self, idle_threshold: f64) -> Result<ProfileFeatures> {
        features(&self.samples, idle_threshold)
    }

    pub fn distance_km(&self) -> f64 {
        self.samples.windows(2).map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0)).sum::<f64>() / 1000.0
    }

    /// Fuel economy (mpg) the bin achieves over the cycle with features `feats`.
    pub fn recreated_mpg(&self, bin: &FuelEconomyBin, feats: &ProfileFeatures) -> Result<f64> {
        let liters = fc_with(bin.k()?, feats);
        Ok((feats.length / KM_PER_MILE) / (liters / LITERS_PER_GALLON))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationOptions {
    /// Scale `k3` with the bin like the other indices. When false, `k3` takes one
    /// shared value across bins (the prior midpoint times the median bin scale)
    /// and only `k1`, `k2`, `k4` are scaled.
    pub scale_k3: bool,
    pub idle_threshold: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self { scale_k3: true, idle_threshold: DEFAULT_IDLE_THRESHOLD }
    }
}

/// Liters the bin must burn on the cycle to hit its target economy.
fn target_liters(bin: &FuelEconomyBin, distance_km: f64) -> f64 {
    distance_km / KM_PER_MILE / bin.target_mpg * LITERS_PER_GALLON
}

/// Solves each bin's scale so the cycle reproduces its target economy, and
/// stores the calibrated indices on the fleet. Returns the scale per bin.
pub fn calibrate(fleet: &mut Fleet, cycle: &DriveCycle, opts: &CalibrationOptions) -> Result<Vec<f64>> {
    let f = cycle.features(opts.idle_threshold)?;
    let mut scales = Vec::with_capacity(fleet.bins.len());
    for bin in &fleet.bins {
        let denom = fc_with(&bin.prior, &f);
        let s = target_liters(bin, f.length) / denom;
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Calibration { bin: bin.id, reason: format!("scale {s} is not positive") });
        }
        scales.push(s);
    }
    if opts.scale_k3 {
        for (bin, s) in fleet.bins.iter_mut().zip(&scales) {
            bin.k = Some(bin.prior.map(|m| m * s));
        }
        return Ok(scales);
    }
    let mut sorted = scales.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let mut out = Vec::with_capacity(fleet.bins.len());
    for bin in &mut fleet.bins {
        let k3 = bin.prior[2] * median;
        let rest = [bin.prior[0], bin.prior[1], 0.0, bin.prior[3]];
        let s = (target_liters(bin, f.length) - k3 * f.accel_integral) / fc_with(&rest, &f);
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Calibration {
                bin: bin.id,
                reason: format!("with k3 held at {k3} the remaining scale {s} is not positive"),
            });
        }
        bin.k = Some([rest[0] * s, rest[1] * s, k3, rest[3] * s]);
        out.push(s);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fuel::standard_bins;

    #[test]
    fn bundled_cycle_shape() {
        let c = DriveCycle::ftp75();
        assert_eq!(c.samples.len(), 1875);
        assert_eq!(c.duration(), 1874.0);
        assert!((c.distance_km() - 17.77).abs() < 0.01);
        let f = c.features(0.3).unwrap();
        assert!((f.length - c.distance_km()).abs() < 1e-12);
        assert!(f.t_idle > 0.0 && f.accel_integral > 0.0);
    }

    #[test]
    fn every_bin_hits_its_target() {
        let cycle = DriveCycle::ftp75();
        let mut fleet = Fleet { bins: standard_bins() };
        calibrate(&mut fleet, &cycle, &CalibrationOptions::default()).unwrap();
        let f = cycle.features(0.3).unwrap();
        for b in &fleet.bins {
            let mpg = cycle.recreated_mpg(b, &f).unwrap();
            assert!((mpg / b.target_mpg - 1.0).abs() < 1e-9, "bin {} gives {mpg}", b.id);
        }
    }

    #[test]
    fn fixed_k3_shares_one_value() {
        let cycle = DriveCycle::ftp75();
        let mut fleet = Fleet { bins: standard_bins() };
        let opts = CalibrationOptions { scale_k3: false, ..Default::default() };
        calibrate(&mut fleet, &cycle, &opts).unwrap();
        let f = cycle.features(0.3).unwrap();
        let k3 = fleet.bins[0].k.unwrap()[2];
        for b in &fleet.bins {
            assert_eq!(b.k.unwrap()[2], k3);
            assert!((cycle.recreated_mpg(b, &f).unwrap() / b.target_mpg - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_cycles() {
        assert!(DriveCycle::new("x", vec![(0.0, 1.0)]).is_err());
        assert!(DriveCycle::new("x", vec![(0.0, 1.0), (0.0, 2.0)]).is_err());
        assert!(DriveCycle::new("x", vec![(0.0, 1.0), (1.0, -2.0)]).is_err());
    }
}
