//! Per-meter hourly fuel rates, quantile classes, coverage and GeoJSON layers.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::assignment::EdgeFlow;
use crate::error::{Error, Result};
use crate::fuel::Fleet;
use crate::network::{Edge, EdgeId, RoadNetwork};
use crate::profiles::{EdgeFeatures, FeatureTable, ProfileFeatures};

pub const DEFAULT_CLASSES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFuelRate {
    pub edge_id: EdgeId,
    pub window: String,
    /// Fleet-average liters per car over the edge.
    pub fcr: f64,
    /// Cars per hour.
    pub flow: f64,
    pub length: f64,
    /// Liters per meter per hour.
    pub rate: f64,
    /// Quantile class, 1-based; 0 until classified.
    pub class: usize,
}

/// `rate = flow × fcr / length`.
pub fn edge_fuel_rate(edge: &Edge, window: &str, mean: &ProfileFeatures, flow: f64, fleet: &Fleet) -> Result<EdgeFuelRate> {
    let fcr = fleet.weighted_fc(mean)?;
    Ok(EdgeFuelRate {
        edge_id: edge.id,
        window: window.to_string(),
        fcr,
        flow,
        length: edge.length,
        rate: flow * fcr / edge.length,
        class: 0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub window: String,
    pub total_liters_per_hour: f64,
    pub covered_edges: usize,
    pub coverage_fraction: f64,
}

/// Profiled flow-carrying edges, flow-carrying edges, and their ratio (1 when no edge carries flow).
pub fn coverage(flows: &[EdgeFlow], features: Option<&BTreeMap<EdgeId, EdgeFeatures>>) -> (usize, usize, f64) {
    let loaded: Vec<&EdgeFlow> = flows.iter().filter(|f| f.flow > 0.0).collect();
    let covered = loaded
        .iter()
        .filter(|f| features.is_some_and(|m| m.contains_key(&f.edge_id)))
        .count();
    let frac = if loaded.is_empty() { 1.0 } else { covered as f64 / loaded.len() as f64 };
    (covered, loaded.len(), frac)
}

/// Rates for every flow-carrying edge that has profile features in `window`.
pub fn window_rates(
    network: &RoadNetwork,
    window: &str,
    flows: &[EdgeFlow],
    features: &FeatureTable,
    fleet: &Fleet,
) -> Result<(Vec<EdgeFuelRate>, WindowSummary)> {
    let table = features.window(window);
    let mut rates = Vec::new();
    for f in flows.iter().filter(|f| f.flow > 0.0) {
        let Some(ef) = table.and_then(|t| t.get(&f.edge_id)) else { continue };
        let edge = network
            .edge(f.edge_id)
            .ok_or_else(|| Error::InvalidInput(format!("flow for unknown edge {}", f.edge_id)))?;
        rates.push(edge_fuel_rate(edge, window, &ef.mean, f.flow, fleet)?);
    }
    let (covered, _, frac) = coverage(flows, table);
    let total = rates.iter().map(|r| r.flow * r.fcr).sum();
    Ok((rates, WindowSummary { window: window.to_string(), total_liters_per_hour: total, covered_edges: covered, coverage_fraction: frac }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    /// Upper bounds of classes `1..Q-1`, inclusive.
    pub breaks: Vec<f64>,
    /// Fewer distinct values than classes.
    pub degenerate: bool,
}

impl Classification {
    pub fn class_of(&self, v: f64) -> usize {
        1 + self.breaks.iter().filter(|&&b| b < v).count()
    }
}

/// Rank-based breaks: break `k` is the value at rank `⌈k·n/Q⌉` of the sorted input.
pub fn quantile_breaks(values: &[f64], q: usize) -> Result<Classification> {
    if q < 2 {
        return Err(Error::InvalidInput(format!("quantile classification needs at least 2 classes, got {q}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut distinct = sorted.clone();
    distinct.dedup();
    let degenerate = distinct.len() < q;
    if degenerate {
        log::warn!("{} distinct rates for {q} classes; classes are degenerate", distinct.len());
    }
    let breaks = if n == 0 {
        Vec::new()
    } else {
        (1..q).map(|k| sorted[(k * n).div_ceil(q).max(1) - 1]).collect()
    };
    Ok(Classification { breaks, degenerate })
}

/// Classifies all rates on breaks computed from the pooled set.
pub fn quantile_classify(rates: &mut [EdgeFuelRate], q: usize) -> Result<Classification> {
    let values: Vec<f64> = rates.iter().map(|r| r.rate).collect();
    let c = quantile_breaks(&values, q)?;
    for r in rates.iter_mut() {
        r.class = c.class_of(r.rate);
    }
    Ok(c)
}

/// GeoJSON FeatureCollection with one LineString per rate.
pub fn to_geojson(rates: &[EdgeFuelRate], network: &RoadNetwork) -> Result<Value> {
    let mut features = Vec::with_capacity(rates.len());
    for r in rates {
        let edge = network
            .edge(r.edge_id)
            .ok_or_else(|| Error::InvalidInput(format!("rate for unknown edge {}", r.edge_id)))?;
        let coords: Vec<[f64; 2]> = [edge.from, edge.to]
            .iter()
            .map(|&n| network.node(n).map(|n| [n.position.lon, n.position.lat]).unwrap())
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": {"type": "LineString", "coordinates": coords},
            "properties": {
                "edge_id": r.edge_id,
                "window": r.window,
                "rate": r.rate,
                "class": r.class,
                "flow_vph": r.flow,
                "fcr_lpc": r.fcr,
            }
        }));
    }
    Ok(json!({"type": "FeatureCollection", "features": features}))
}

pub fn export_geojson(path: &Path, rates: &[EdgeFuelRate], network: &RoadNetwork) -> Result<()> {
    let doc = to_geojson(rates, network)?;
    let bytes = serde_json::to_vec(&doc).map_err(|e| Error::InvalidInput(e.to_string()))?;
    crate::io::write_atomic(path, &bytes)
}

/// Reads a layer written by [`export_geojson`]; lengths come from `network`.
pub fn import_geojson(path: &Path, network: &RoadNetwork) -> Result<Vec<EdgeFuelRate>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::malformed(path, e.line() as u64, e.to_string()))?;
    let bad = |m: &str| Error::malformed(path, 0, m.to_string());
    let mut out = Vec::new();
    for f in doc["features"].as_array().ok_or_else(|| bad("missing features"))? {
        let p = &f["properties"];
        let edge_id = p["edge_id"].as_u64().ok_or_else(|| bad("edge_id"))?;
        let num = |k: &str| p[k].as_f64().ok_or_else(|| bad(k));
        out.push(EdgeFuelRate {
            edge_id,
            window: p["window"].as_str().ok_or_else(|| bad("window"))?.to_string(),
            fcr: num("fcr_lpc")?,
            flow: num("flow_vph")?,
            length: network.edge(edge_id).map_or(f64::NAN, |e| e.length),
            rate: num("rate")?,
            class: p["class"].as_u64().ok_or_else(|| bad("class"))? as usize,
        });
    }
    Ok(out)
}

/// Writes `window,total_liters_per_hour,covered_edges,coverage_fraction`.
pub fn write_summary(path: &Path, rows: &[WindowSummary]) -> Result<()> {
    let mut w = crate::io::csv_writer(path)?;
    for r in rows {
        w.record(r)?;
    }
    w.finish()
}
