//! Distribution summaries over pooled STI reports.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reach::StiReport;

pub const PERCENTILES: [u32; 4] = [50, 75, 90, 99];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Quantity {
    ActorSti,
    SceneSti,
}

impl Quantity {
    pub fn name(self) -> &'static str {
        match self {
            Quantity::ActorSti => "actor-sti",
            Quantity::SceneSti => "scene-sti",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PercentileReport {
    pub quantity: Quantity,
    /// keyed "p50", "p75", ...
    pub percentiles: BTreeMap<String, f64>,
    pub n: usize,
}

/// Nearest-rank percentile of an ascending sample: the value at rank
/// `ceil(p / 100 * n)`, with rank 1 for `p = 0`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=100.0).contains(&p) {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub fn percentile_report(quantity: Quantity, values: Vec<f64>) -> Result<PercentileReport> {
    if values.is_empty() {
        return Err(Error::EmptySample(format!("no {} values", quantity.name())));
    }
    let v = sorted(values);
    let percentiles = PERCENTILES
        .iter()
        .map(|&p| (format!("p{p}"), nearest_rank(&v, p as f64).expect("non-empty")))
        .collect();
    Ok(PercentileReport {
        quantity,
        percentiles,
        n: v.len(),
    })
}

/// Pooled samples from analyzed steps; steps recorded as gaps are skipped.
pub fn pooled(reports: &[StiReport]) -> BTreeMap<Quantity, Vec<f64>> {
    let mut out: BTreeMap<Quantity, Vec<f64>> = BTreeMap::new();
    for r in reports.iter().filter(|r| r.gap.is_none()) {
        out.entry(Quantity::SceneSti).or_default().push(r.scene_sti);
        out.entry(Quantity::ActorSti).or_default().extend(r.actors.values().copied());
    }
    out
}

/// Percentiles for scene STI and, when any actor was observed, actor STI.
pub fn characterize(reports: &[StiReport]) -> Result<Vec<PercentileReport>> {
    let pool = pooled(reports);
    let scene = pool.get(&Quantity::SceneSti).cloned().unwrap_or_default();
    let mut out = Vec::new();
    match pool.get(&Quantity::ActorSti) {
        Some(a) if !a.is_empty() => out.push(percentile_report(Quantity::ActorSti, a.clone())?),
        _ => {}
    }
    out.push(percentile_report(Quantity::SceneSti, scene)?);
    Ok(out)
}

/// Empirical CDF rows `quantity,value,cdf`, one per distinct value.
pub fn cdf_csv(pool: &BTreeMap<Quantity, Vec<f64>>) -> String {
    let mut out = String::from("quantity,value,cdf\n");
    for (q, values) in pool {
        let v = sorted(values.clone());
        let n = v.len() as f64;
        for (i, x) in v.iter().enumerate() {
            if v.get(i + 1) != Some(x) {
                writeln!(out, "{},{},{}", q.name(), x, (i + 1) as f64 / n).expect("write to string");
            }
        }
    }
    out
}
