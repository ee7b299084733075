use std::path::Path;

use serde::Deserialize;

use super::{KM_PER_MILE, LITERS_PER_GALLON};
use crate::error::{Error, Result};

const ANCHORS_CSV: &str = include_str!("../../assets/doe_anchors.csv");

/// The curve is evaluated with speed clamped to this range, mph.
pub const DOE_MIN_MPH: f64 = 5.0;
pub const DOE_MAX_MPH: f64 = 80.0;

/// Cubic least-squares fit of fuel economy (mpg) against speed (mph).
#[derive(Debug, Clone, PartialEq)]
pub struct DoeCurve {
    pub anchors: Vec<(f64, f64)>,
    /// Coefficients of `c0 + c1 x + c2 x² + c3 x³` with `x = mph / 50`.
    coeffs: [f64; 4],
}

#[derive(Deserialize)]
struct AnchorRow {
    speed_mph: f64,
    fe_mpg: f64,
}

const X_SCALE: f64 = 50.0;

impl DoeCurve {
    /// Fit to the bundled anchor table.
    pub fn bundled() -> Self {
        let mut rdr = csv::Reader::from_reader(ANCHORS_CSV.as_bytes());
        let anchors = rdr
            .deserialize::<AnchorRow>()
            .map(|r| r.map(|r| (r.speed_mph, r.fe_mpg)).expect("bundled anchors parse"))
            .collect();
        Self::fit(anchors).expect("bundled anchors fit")
    }

    /// Reads `speed_mph,fe_mpg` and fits.
    pub fn load(path: &Path) -> Result<Self> {
        let rows: Vec<AnchorRow> = crate::io::read_csv(path)?;
        Self::fit(rows.into_iter().map(|r| (r.speed_mph, r.fe_mpg)).collect())
    }

    pub fn fit(anchors: Vec<(f64, f64)>) -> Result<Self> {
        if anchors.len() < 4 {
            return Err(Error::InvalidInput(format!("a cubic fit needs 4 anchors, got {}", anchors.len())));
        }
        let mut ata = [[0.0; 4]; 4];
        let mut atb = [0.0; 4];
        for &(mph, mpg) in &anchors {
            let x = mph / X_SCALE;
            let row = [1.0, x, x * x, x * x * x];
            for i in 0..4 {
                atb[i] += row[i] * mpg;
                for j in 0..4 {
                    ata[i][j] += row[i] * row[j];
                }
            }
        }
        let coeffs = solve4(ata, atb)
            .ok_or_else(|| Error::InvalidInput("DOE anchors do not determine a cubic".into()))?;
        let curve = Self { anchors, coeffs };
        let (_, min_fe) = curve.extreme(false);
        if min_fe <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "fitted DOE curve falls to {min_fe} mpg within [{DOE_MIN_MPH}, {DOE_MAX_MPH}] mph"
            )));
        }
        Ok(curve)
    }

    /// Fuel economy in mpg at `mph`, clamped to the fitted range.
    pub fn mpg(&self, mph: f64) -> f64 {
        let x = mph.clamp(DOE_MIN_MPH, DOE_MAX_MPH) / X_SCALE;
        let c = &self.coeffs;
        c[0] + x * (c[1] + x * (c[2] + x * c[3]))
    }

    pub fn mpg_at_ms(&self, speed_ms: f64) -> f64 {
        self.mpg(speed_ms * 3.6 / KM_PER_MILE)
    }

    /// Largest relative deviation of the curve from its anchors.
    pub fn max_residual(&self) -> f64 {
        self.anchors.iter().map(|&(s, fe)| ((self.mpg(s) - fe) / fe).abs()).fold(0.0, f64::max)
    }

    /// Speed (mph) of peak fuel economy within the clamped range.
    pub fn peak_mph(&self) -> f64 {
        self.extreme(true).0
    }

    /// Maximum (`true`) or minimum of the curve over the clamped range.
    fn extreme(&self, max: bool) -> (f64, f64) {
        let c = &self.coeffs;
        // Stationary points of the cubic: 3c3 x² + 2c2 x + c1 = 0.
        let (a, b, cc) = (3.0 * c[3], 2.0 * c[2], c[1]);
        let mut xs = vec![DOE_MIN_MPH, DOE_MAX_MPH];
        if a.abs() > 1e-15 {
            let disc = b * b - 4.0 * a * cc;
            if disc >= 0.0 {
                for r in [(-b + disc.sqrt()) / (2.0 * a), (-b - disc.sqrt()) / (2.0 * a)] {
                    xs.push(r * X_SCALE);
                }
            }
        } else if b.abs() > 1e-15 {
            xs.push(-cc / b * X_SCALE);
        }
        xs.into_iter()
            .filter(|s| (DOE_MIN_MPH..=DOE_MAX_MPH).contains(s))
            .map(|s| (s, self.mpg(s)))
            .fold(None, |best: Option<(f64, f64)>, p| match best {
                Some(b) if (max && b.1 >= p.1) || (!max && b.1 <= p.1) => Some(b),
                _ => Some(p),
            })
            .unwrap()
    }
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Liters to drive `distance_km` at a constant `avg_speed` (m/s).
pub fn doe_baseline_fc(avg_speed: f64, distance_km: f64, curve: &DoeCurve) -> Result<f64> {
    if distance_km == 0.0 {
        return Ok(0.0);
    }
    if distance_km < 0.0 || !distance_km.is_finite() {
        return Err(Error::InvalidInput(format!("distance {distance_km} km must be positive")));
    }
    if avg_speed <= 0.0 || !avg_speed.is_finite() {
        return Err(Error::InvalidInput(format!("average speed {avg_speed} m/s must be positive")));
    }
    let miles = distance_km / KM_PER_MILE;
    Ok(miles / curve.mpg_at_ms(avg_speed) * LITERS_PER_GALLON)
}
