//! Average hourly trip production per calendar tag.

use std::collections::BTreeSet;

use chrono::{DateTime, FixedOffset, NaiveDate, Timelike, Utc};
use serde::{Deserialize, Serialize};

/// Named set of inclusive date ranges (local dates), e.g. Ramadan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalendarTag {
    pub name: String,
    pub ranges: Vec<(NaiveDate, NaiveDate)>,
}

impl CalendarTag {
    fn days(&self) -> BTreeSet<NaiveDate> {
        let mut out = BTreeSet::new();
        for &(a, b) in &self.ranges {
            let mut d = a;
            while d <= b {
                out.insert(d);
                d = d.succ_opt().expect("date overflow");
            }
        }
        out
    }
}

/// 24 hourly means per tag, plus a `combined` row set over all tagged days.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyRates {
    pub labels: Vec<String>,
    pub rates: Vec<[f64; 24]>,
}

impl HourlyRates {
    pub fn get(&self, label: &str) -> Option<&[f64; 24]> {
        self.labels.iter().position(|l| l == label).map(|i| &self.rates[i])
    }

    pub fn write_csv(&self, path: &std::path::Path) -> crate::Result<()> {
        let mut w = crate::io::csv_writer(path)?;
        w.row(["tag", "hour", "mean_trips_per_hour"])?;
        for (label, rates) in self.labels.iter().zip(&self.rates) {
            for (h, r) in rates.iter().enumerate() {
                w.row([label.clone(), h.to_string(), r.to_string()])?;
            }
        }
        w.finish()
    }
}

/// Mean trips per hour of day for each tag: trips picked up in that local hour
/// on the tag's days, divided by the number of days in the tag.
pub fn hourly_trip_rates(pickups: &[DateTime<Utc>], tags: &[CalendarTag], offset: FixedOffset) -> HourlyRates {
    let day_sets: Vec<BTreeSet<NaiveDate>> = tags.iter().map(CalendarTag::days).collect();
    let all_days: BTreeSet<NaiveDate> = day_sets.iter().flatten().copied().collect();
    let mut counts = vec![[0u64; 24]; tags.len() + 1];
    for p in pickups {
        let local = p.with_timezone(&offset);
        let (date, hour) = (local.date_naive(), local.hour() as usize);
        for (k, days) in day_sets.iter().enumerate() {
            if days.contains(&date) {
                counts[k][hour] += 1;
            }
        }
        if all_days.contains(&date) {
            counts[tags.len()][hour] += 1;
        }
    }
    let n_days: Vec<usize> = day_sets.iter().map(BTreeSet::len).chain([all_days.len()]).collect();
    let rates = counts
        .iter()
        .zip(&n_days)
        .map(|(c, &d)| {
            let mut r = [0.0; 24];
            if d > 0 {
                for h in 0..24 {
                    r[h] = c[h] as f64 / d as f64;
                }
            }
            r
        })
        .collect();
    let labels = tags.iter().map(|t| t.name.clone()).chain(["combined".to_string()]).collect();
    HourlyRates { labels, rates }
}
