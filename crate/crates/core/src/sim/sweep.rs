//! Batch evaluation of a policy over many cut-in mutations.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::reach::ReachConfig;

use super::stats::{bin_accident_probability, ks_statistic, KsResult, StiBin};
use super::{simulate, CutInParams, MitigationPolicy, SimConfig, SimResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    pub params: CutInParams,
    pub accident: bool,
    pub accident_step: Option<i64>,
    pub steps: usize,
    pub mean_sti: f64,
    pub max_sti: f64,
    pub mitigation_steps: i64,
    pub total_reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub policy: String,
    pub runs: usize,
    pub failures: usize,
    pub accidents: usize,
    pub accident_rate: f64,
    /// mean over accident runs of each run's mean STI
    pub mean_sti_accident: Option<f64>,
    pub mean_sti_safe: Option<f64>,
    /// accident vs accident-free per-run mean STI
    pub ks: Option<KsResult>,
    /// P(accident within the next `accident_window` steps | STI bin)
    pub bins: Vec<StiBin>,
    pub trend_non_decreasing: bool,
    pub run_summaries: Vec<RunSummary>,
}

pub struct Sweep {
    pub summary: SweepSummary,
    /// per mutation, in input order
    pub results: Vec<Result<SimResult, String>>,
}

/// Simulates every mutation with a fresh policy from `make_policy`. Runs
/// execute in parallel; results keep input order.
pub fn run_sweep<F>(mutations: &[CutInParams], make_policy: F, cfg: &SimConfig, reach: &ReachConfig) -> Sweep
where
    F: Fn() -> Box<dyn MitigationPolicy> + Sync,
{
    let results: Vec<Result<SimResult, String>> = mutations
        .par_iter()
        .map(|params| {
            let mut policy = make_policy();
            simulate(params, policy.as_mut(), cfg, reach).map_err(|e| e.to_string())
        })
        .collect();
    let policy = make_policy().name();
    let summary = summarize(&policy, mutations, &results, cfg);
    Sweep { summary, results }
}

fn summarize(policy: &str, mutations: &[CutInParams], results: &[Result<SimResult, String>], cfg: &SimConfig) -> SweepSummary {
    let run_summaries: Vec<RunSummary> = results
        .iter()
        .zip(mutations)
        .enumerate()
        .map(|(index, (r, params))| match r {
            Ok(sim) => RunSummary {
                index,
                params: *params,
                accident: sim.accident,
                accident_step: sim.accident_step,
                steps: sim.trace.len(),
                mean_sti: sim.mean_sti(),
                max_sti: sim.sti_series.iter().copied().fold(0.0, f64::max),
                mitigation_steps: sim.mitigation_windows.iter().map(|(a, b)| b - a).sum(),
                total_reward: sim.reward_trace.iter().map(|r| r.total).sum(),
                error: None,
            },
            Err(e) => RunSummary {
                index,
                params: *params,
                accident: false,
                accident_step: None,
                steps: 0,
                mean_sti: 0.0,
                max_sti: 0.0,
                mitigation_steps: 0,
                total_reward: 0.0,
                error: Some(e.clone()),
            },
        })
        .collect();
    let ok: Vec<&RunSummary> = run_summaries.iter().filter(|r| r.error.is_none()).collect();
    let crashed: Vec<f64> = ok.iter().filter(|r| r.accident).map(|r| r.mean_sti).collect();
    let safe: Vec<f64> = ok.iter().filter(|r| !r.accident).map(|r| r.mean_sti).collect();
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);

    // every step strictly before the accident (if any) is one pair
    let window = cfg.accident_window as i64;
    let pairs = results.iter().filter_map(|r| r.as_ref().ok()).flat_map(|sim| {
        sim.trace
            .iter()
            .filter(move |rec| sim.accident_step.is_none_or(|a| rec.t < a))
            .map(move |rec| (rec.sti, sim.accident_step.is_some_and(|a| a - rec.t <= window)))
    });
    let bins = bin_accident_probability(pairs, cfg.sti_bins);
    let probs: Vec<f64> = bins.iter().filter_map(|b| b.probability).collect();
    SweepSummary {
        policy: policy.to_string(),
        runs: results.len(),
        failures: results.len() - ok.len(),
        accidents: crashed.len(),
        accident_rate: if ok.is_empty() { 0.0 } else { crashed.len() as f64 / ok.len() as f64 },
        mean_sti_accident: mean(&crashed),
        mean_sti_safe: mean(&safe),
        ks: ks_statistic(&crashed, &safe).ok(),
        trend_non_decreasing: probs.windows(2).all(|w| w[1] >= w[0]),
        bins,
        run_summaries,
    }
}
