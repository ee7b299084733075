use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TripRecord;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    TargetedProfile,
    TargetedConstant,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Random, Strategy::TargetedProfile, Strategy::TargetedConstant];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::TargetedProfile => "targeted_profile",
            Strategy::TargetedConstant => "targeted_constant",
        }
    }
}

/// What the removed fuel is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Removed profile-model fuel over total profile-model fuel, for every strategy.
    ProfileTotal,
    /// Each ranking measured in its own model: the constant-ranked curve uses constant-speed fuel.
    OwnMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SavingsParams {
    /// Fractions of trips removed; 0 and 1 are always added.
    pub grid: Vec<f64>,
    /// Random orders averaged per grid point.
    pub seeds: usize,
    pub seed: u64,
    pub normalization: Normalization,
}

impl Default for SavingsParams {
    fn default() -> Self {
        let mut grid: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
        grid.push(0.145);
        Self { grid, seeds: 20, seed: 0, normalization: Normalization::ProfileTotal }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsPoint {
    pub fraction_removed: f64,
    pub fuel_saved_fraction: f64,
    /// Spread across random orders; zero for deterministic rankings.
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavingsCurve {
    pub strategy: Strategy,
    pub points: Vec<SavingsPoint>,
    /// Random orders averaged.
    pub seeds: usize,
}

impl SavingsCurve {
    pub fn at(&self, fraction: f64) -> Option<&SavingsPoint> {
        self.points.iter().find(|p| (p.fraction_removed - fraction).abs() < 1e-12)
    }
}

fn sorted_grid(grid: &[f64]) -> Result<Vec<f64>> {
    if let Some(f) = grid.iter().find(|f| !(0.0..=1.0).contains(*f)) {
        return Err(Error::Config(format!("removal fraction {f} outside [0, 1]")));
    }
    let mut g: Vec<f64> = grid.iter().copied().chain([0.0, 1.0]).collect();
    g.sort_by(f64::total_cmp);
    g.dedup();
    Ok(g)
}

/// Cumulative `weight` over trips taken in `order`, read at `⌊f·N⌉` removed trips.
fn read_prefix(order: &[usize], weight: &[f64], total: f64, grid: &[f64]) -> Vec<f64> {
    let n = order.len();
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &i in order {
        acc += weight[i];
        prefix.push(acc);
    }
    grid.iter()
        .map(|f| {
            let k = (f * n as f64).round() as usize;
            if k == n { 1.0 } else { prefix[k] / total }
        })
        .collect()
}

fn descending_by(trips: &[TripRecord], key: impl Fn(&TripRecord) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..trips.len()).collect();
    order.sort_by(|&a, &b| key(&trips[b]).total_cmp(&key(&trips[a])).then(trips[a].trip_id.cmp(&trips[b].trip_id)));
    order
}

/// Fraction of fuel saved against fraction of trips removed.
pub fn savings_curve(trips: &[TripRecord], strategy: Strategy, params: &SavingsParams) -> Result<SavingsCurve> {
    if trips.is_empty() {
        return Err(Error::InvalidInput("savings curve of an empty trip set".into()));
    }
    let grid = sorted_grid(&params.grid)?;
    let own_constant = strategy == Strategy::TargetedConstant && params.normalization == Normalization::OwnMethod;
    let weight: Vec<f64> = trips.iter().map(|t| if own_constant { t.fuel_constant } else { t.fuel_profile }).collect();
    let total: f64 = weight.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidInput("trips consume no fuel".into()));
    }
    let point = |f: f64, v: f64, sd: f64| SavingsPoint { fraction_removed: f, fuel_saved_fraction: v, stddev: sd };
    let single = |order: Vec<usize>| {
        let values = read_prefix(&order, &weight, total, &grid);
        grid.iter().zip(values).map(|(&f, v)| point(f, v, 0.0)).collect()
    };
    let (points, seeds) = match strategy {
        Strategy::TargetedProfile => (single(descending_by(trips, |t| t.fuel_per_meter)), 1),
        Strategy::TargetedConstant => (single(descending_by(trips, TripRecord::constant_per_meter)), 1),
        Strategy::Random => {
            let seeds = params.seeds.max(1);
            let mut sum = vec![0.0; grid.len()];
            let mut sum_sq = vec![0.0; grid.len()];
            let mut order: Vec<usize> = (0..trips.len()).collect();
            for s in 0..seeds as u64 {
                order.sort_unstable();
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed.wrapping_add(s));
                order.shuffle(&mut rng);
                for (j, v) in read_prefix(&order, &weight, total, &grid).into_iter().enumerate() {
                    sum[j] += v;
                    sum_sq[j] += v * v;
                }
            }
            let n = seeds as f64;
            let points = grid
                .iter()
                .enumerate()
                .map(|(j, &f)| {
                    let mean = sum[j] / n;
                    let var = if seeds > 1 { ((sum_sq[j] - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
                    point(f, mean, var.sqrt())
                })
                .collect();
            (points, seeds)
        }
    };
    Ok(SavingsCurve { strategy, points, seeds })
}

/// Writes `strategy,fraction_removed,fuel_saved_fraction,stddev`.
pub fn write_curves(path: &Path, curves: &[SavingsCurve]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    w.row(["strategy", "fraction_removed", "fuel_saved_fraction", "stddev"])?;
    for c in curves {
        for p in &c.points {
            w.row([
                c.strategy.name().to_string(),
                p.fraction_removed.to_string(),
                p.fuel_saved_fraction.to_string(),
                p.stddev.to_string(),
            ])?;
        }
    }
    w.finish()
}
