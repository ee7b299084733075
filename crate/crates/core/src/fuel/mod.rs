//! StreetSmart fuel model, per-bin calibration and the constant-speed baseline.
//!
//! `FC = k1·T_idle + k2·T_move + k3·∫|a|dx + k4·L`, in liters.
//!
//! The published energy-index ranges are not in consistent units, so each
//! bin's range midpoints are used as a shape vector `μ` and scaled by a single
//! positive factor chosen so the bin reproduces its target fuel economy on the
//! FTP-75 cycle.

mod calibration;
mod doe;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profiles::ProfileFeatures;

pub use calibration::{calibrate, CalibrationOptions, DriveCycle};
pub use doe::{doe_baseline_fc, DoeCurve, DOE_MAX_MPH, DOE_MIN_MPH};

pub const LITERS_PER_GALLON: f64 = 3.78541;
pub const KM_PER_MILE: f64 = 1.609344;

pub fn mpg_to_km_per_liter(mpg: f64) -> f64 {
    mpg * KM_PER_MILE / LITERS_PER_GALLON
}

pub fn km_per_liter_to_mpg(kml: f64) -> f64 {
    kml * LITERS_PER_GALLON / KM_PER_MILE
}

/// A vehicle class sharing one set of energy indices.
#[derive(Debug, Clone, PartialEq)]
pub struct FuelEconomyBin {
    pub id: u8,
    pub label: &'static str,
    /// Fuel-economy interval in mpg; `hi` is infinite for the open top bin.
    pub fe_range: (f64, f64),
    /// Fuel economy the calibrated bin must reproduce on the drive cycle, mpg.
    pub target_mpg: f64,
    /// Midpoints of the published `k1..k4` ranges.
    pub prior: [f64; 4],
    /// Calibrated `k1..k4` in liters per feature unit.
    pub k: Option<[f64; 4]>,
    pub probability: f64,
}

impl FuelEconomyBin {
    pub fn k(&self) -> Result<&[f64; 4]> {
        self.k.as_ref().ok_or(Error::Uncalibrated(self.id))
    }
}

struct Prior {
    label: &'static str,
    fe_range: (f64, f64),
    target_mpg: f64,
    k1: (f64, f64),
    k2: (f64, f64),
    k3: (f64, f64),
    k4: (f64, f64),
}

const fn prior(
    label: &'static str,
    fe_range: (f64, f64),
    target_mpg: f64,
    k1: (f64, f64),
    k2: (f64, f64),
    k4: (f64, f64),
) -> Prior {
    Prior { label, fe_range, target_mpg, k1, k2, k3: (1.0, 4.8), k4 }
}

/// Published energy-index ranges per fuel-economy bin. The open `> 30 mpg`
/// bin targets 31 mpg; the vehicle-class bins have single published economies.
const PRIORS: [Prior; 14] = [
    prior("10-12 mpg", (10.0, 12.0), 11.0, (37.0, 37.0), (30.0, 34.0), (2000.0, 2300.0)),
    prior("12-14 mpg", (12.0, 14.0), 13.0, (34.6, 34.6), (23.0, 32.0), (1300.0, 2300.0)),
    prior("14-16 mpg", (14.0, 16.0), 15.0, (31.9, 31.9), (21.0, 26.0), (1100.0, 1900.0)),
    prior("16-18 mpg", (16.0, 18.0), 17.0, (29.5, 29.5), (17.5, 24.0), (1000.0, 1600.0)),
    prior("18-20 mpg", (18.0, 20.0), 19.0, (26.9, 26.9), (15.0, 22.0), (1000.0, 1250.0)),
    prior("20-22 mpg", (20.0, 22.0), 21.0, (24.3, 24.3), (13.0, 18.0), (980.0, 1250.0)),
    prior("22-24 mpg", (22.0, 24.0), 23.0, (21.7, 21.7), (12.0, 16.0), (850.0, 1200.0)),
    prior("24-26 mpg", (24.0, 26.0), 25.0, (19.0, 19.0), (12.0, 15.0), (750.0, 1050.0)),
    prior("26-28 mpg", (26.0, 28.0), 27.0, (16.3, 16.3), (11.0, 14.0), (780.0, 900.0)),
    prior("28-30 mpg", (28.0, 30.0), 29.0, (14.0, 14.0), (10.5, 12.5), (710.0, 900.0)),
    prior(">30 mpg", (30.0, f64::INFINITY), 31.0, (5.0, 5.0), (5.0, 14.5), (500.0, 1000.0)),
    prior("bus", (6.3, 6.3), 6.3, (30.0, 37.0), (30.0, 75.0), (2000.0, 8000.0)),
    prior("truck", (17.27, 17.27), 17.27, (29.0, 30.0), (12.0, 27.0), (500.0, 2200.0)),
    prior("motorcycle", (43.5, 43.5), 43.5, (5.0, 5.0), (6.0, 10.0), (500.0, 600.0)),
];

fn mid(r: (f64, f64)) -> f64 {
    0.5 * (r.0 + r.1)
}

/// The fourteen uncalibrated bins with zero fleet probability.
pub fn standard_bins() -> Vec<FuelEconomyBin> {
    PRIORS
        .iter()
        .enumerate()
        .map(|(i, p)| FuelEconomyBin {
            id: i as u8 + 1,
            label: p.label,
            fe_range: p.fe_range,
            target_mpg: p.target_mpg,
            prior: [mid(p.k1), mid(p.k2), mid(p.k3), mid(p.k4)],
            k: None,
            probability: 0.0,
        })
        .collect()
}

/// Published range of `k_i` for a bin, as `(low, high)` per index.
pub fn published_ranges(bin_id: u8) -> Option<[(f64, f64); 4]> {
    let p = PRIORS.get(bin_id.checked_sub(1)? as usize)?;
    Some([p.k1, p.k2, p.k3, p.k4])
}

/// Fuel in liters for one traversal under calibrated indices `k`.
pub fn fc_with(k: &[f64; 4], f: &ProfileFeatures) -> f64 {
    k[0] * f.t_idle + k[1] * f.t_move + k[2] * f.accel_integral + k[3] * f.length
}

/// StreetSmart fuel consumption in liters.
pub fn streetsmart_fc(features: &ProfileFeatures, bin: &FuelEconomyBin) -> Result<f64> {
    Ok(fc_with(bin.k()?, features))
}

/// A set of bins with fleet probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub bins: Vec<FuelEconomyBin>,
}

#[derive(Debug, Deserialize)]
struct DistributionRow {
    bin_id: u8,
    probability: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelRow {
    bin_id: u8,
    k1: f64,
    k2: f64,
    k3: f64,
    k4: f64,
    recreated_fe_mpg: f64,
}

impl Fleet {
    /// The standard bins with the given `(bin id, probability)` pairs; unnamed bins get zero.
    pub fn with_distribution(dist: &[(u8, f64)]) -> Result<Self> {
        let mut bins = standard_bins();
        for &(id, p) in dist {
            let bin = bins
                .iter_mut()
                .find(|b| b.id == id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown fuel-economy bin {id}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("bin {id}: probability {p} outside [0, 1]")));
            }
            bin.probability = p;
        }
        let fleet = Self { bins };
        fleet.validate()?;
        Ok(fleet)
    }

    /// Reads `bin_id,probability`.
    pub fn load_distribution(path: &Path) -> Result<Self> {
        let rows: Vec<DistributionRow> = crate::io::read_csv(path)?;
        Self::with_distribution(&rows.iter().map(|r| (r.bin_id, r.probability)).collect::<Vec<_>>())
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.bins.iter().map(|b| b.probability).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("fleet probabilities sum to {total}, not 1")));
        }
        Ok(())
    }

    pub fn bin(&self, id: u8) -> Option<&FuelEconomyBin> {
        self.bins.iter().find(|b| b.id == id)
    }

    /// Bins with positive probability.
    pub fn active(&self) -> impl Iterator<Item = &FuelEconomyBin> {
        self.bins.iter().filter(|b| b.probability > 0.0)
    }

    /// The most common bin; ties go to the lower id.
    pub fn reference_bin(&self) -> &FuelEconomyBin {
        self.bins
            .iter()
            .fold(&self.bins[0], |best, b| if b.probability > best.probability { b } else { best })
    }

    /// Fleet-average liters per car: `Σ p_b · FC_b`.
    pub fn weighted_fc(&self, features: &ProfileFeatures) -> Result<f64> {
        self.active().map(|b| Ok(b.probability * streetsmart_fc(features, b)?)).sum()
    }

    /// Fleet-average energy indices; `weighted_fc` equals `fc_with` on these.
    pub fn weighted_k(&self) -> Result<[f64; 4]> {
        let mut k = [0.0; 4];
        for b in self.active() {
            for (acc, v) in k.iter_mut().zip(b.k()?) {
                *acc += b.probability * v;
            }
        }
        Ok(k)
    }

    pub fn is_calibrated(&self) -> bool {
        self.bins.iter().all(|b| b.k.is_some())
    }

    /// Writes `bin_id,k1,k2,k3,k4,recreated_fe_mpg`.
    pub fn write_model_csv(&self, path: &Path, cycle: &DriveCycle, idle_threshold: f64) -> Result<()> {
        let feats = cycle.features(idle_threshold)?;
        let mut w = crate::io::csv_writer(path)?;
        for b in &self.bins {
            let k = b.k()?;
            w.record(ModelRow {
                bin_id: b.id,
                k1: k[0],
                k2: k[1],
                k3: k[2],
                k4: k[3],
                recreated_fe_mpg: cycle.recreated_mpg(b, &feats)?,
            })?;
        }
        w.finish()
    }

    /// Applies calibrated indices from a model file written by [`Fleet::write_model_csv`].
    pub fn apply_model_csv(&mut self, path: &Path) -> Result<()> {
        let rows: Vec<ModelRow> = crate::io::read_csv(path)?;
        for r in rows {
            let bin = self
                .bins
                .iter_mut()
                .find(|b| b.id == r.bin_id)
                .ok_or_else(|| Error::InvalidInput(format!("unknown fuel-economy bin {}", r.bin_id)))?;
            bin.k = Some([r.k1, r.k2, r.k3, r.k4]);
        }
        match self.bins.iter().find(|b| b.k.is_none()) {
            Some(b) => Err(Error::Uncalibrated(b.id)),
            None => Ok(()),
        }
    }
}

/// Fleet-weighted fuel per car, liters.
pub fn fleet_weighted_fcr(features: &ProfileFeatures, fleet: &Fleet) -> Result<f64> {
    fleet.weighted_fc(features)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated() -> Fleet {
        let mut fleet = Fleet::with_distribution(&[(6, 0.5), (7, 0.5)]).unwrap();
        calibrate(&mut fleet, &DriveCycle::ftp75(), &CalibrationOptions::default()).unwrap();
        fleet
    }

    #[test]
    fn prior_midpoints() {
        let bins = standard_bins();
        assert_eq!(bins.len(), 14);
        assert_eq!(bins[0].prior, [37.0, 32.0, 2.9, 2150.0]);
        assert_eq!(bins[11].target_mpg, 6.3);
        assert_eq!(bins[12].target_mpg, 17.27);
        assert_eq!(bins[13].target_mpg, 43.5);
        assert!(bins[..10].iter().all(|b| b.target_mpg == mid(b.fe_range)));
    }

    #[test]
    fn uncalibrated_is_an_error() {
        let b = &standard_bins()[0];
        assert!(matches!(streetsmart_fc(&ProfileFeatures::default(), b), Err(Error::Uncalibrated(1))));
    }

    #[test]
    fn zero_and_linearity() {
        let fleet = calibrated();
        let b = fleet.bin(7).unwrap();
        assert_eq!(streetsmart_fc(&ProfileFeatures::default(), b).unwrap(), 0.0);
        let f = ProfileFeatures { t_idle: 12.0, t_move: 80.0, accel_integral: 40.0, length: 0.6 };
        let one = streetsmart_fc(&f, b).unwrap();
        let two = streetsmart_fc(&f.scaled(2.0), b).unwrap();
        assert!((two - 2.0 * one).abs() <= 1e-12 * two);
    }

    #[test]
    fn fleet_weighting() {
        let fleet = calibrated();
        let f = ProfileFeatures { t_idle: 5.0, t_move: 30.0, accel_integral: 10.0, length: 0.3 };
        let a = streetsmart_fc(&f, fleet.bin(6).unwrap()).unwrap();
        let b = streetsmart_fc(&f, fleet.bin(7).unwrap()).unwrap();
        let w = fleet_weighted_fcr(&f, &fleet).unwrap();
        assert!((w - 0.5 * (a + b)).abs() < 1e-15);
        assert!((fc_with(&fleet.weighted_k().unwrap(), &f) - w).abs() < 1e-15);
        assert_eq!(fleet_weighted_fcr(&ProfileFeatures::default(), &fleet).unwrap(), 0.0);

        let mut single = Fleet::with_distribution(&[(7, 1.0)]).unwrap();
        calibrate(&mut single, &DriveCycle::ftp75(), &CalibrationOptions::default()).unwrap();
        assert_eq!(fleet_weighted_fcr(&f, &single).unwrap(), streetsmart_fc(&f, single.bin(7).unwrap()).unwrap());
    }

    #[test]
    fn distribution_must_sum_to_one() {
        assert!(Fleet::with_distribution(&[(1, 0.5), (2, 0.4)]).is_err());
        assert!(Fleet::with_distribution(&[(15, 1.0)]).is_err());
        let f = Fleet::with_distribution(&[(3, 0.2), (9, 0.8)]).unwrap();
        assert_eq!(f.reference_bin().id, 9);
    }

    #[test]
    fn model_csv_round_trip() {
        let mut fleet = Fleet::with_distribution(&[(2, 1.0)]).unwrap();
        let cycle = DriveCycle::ftp75();
        calibrate(&mut fleet, &cycle, &CalibrationOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.csv");
        fleet.write_model_csv(&path, &cycle, 0.3).unwrap();
        let mut back = Fleet::with_distribution(&[(2, 1.0)]).unwrap();
        back.apply_model_csv(&path).unwrap();
        assert_eq!(back, fleet);
    }

    #[test]
    fn unit_conversions() {
        assert!((km_per_liter_to_mpg(mpg_to_km_per_liter(23.0)) - 23.0).abs() < 1e-12);
        assert!((mpg_to_km_per_liter(10.0) - 4.2514).abs() < 1e-4);
    }
}
