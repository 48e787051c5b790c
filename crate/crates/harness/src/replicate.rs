//! Independent replications run in parallel, and their reductions.

use anyhow::{ensure, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::experiment::{run_experiment, ExperimentConfig, RunOptions, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; `0` for a single value.
    pub sd: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn new(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Some(Stats { count: n, mean, sd, median, min: sorted[0], max: sorted[n - 1] })
    }

    /// `(mean - 2 sd, mean + 2 sd)`.
    pub fn band(&self) -> (f64, f64) {
        (self.mean - 2.0 * self.sd, self.mean + 2.0 * self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckpointAggregate {
    pub k: u64,
    pub runs: usize,
    /// Mean over runs of `log10 ||M - M*||_F`.
    pub mean_log10_distance: Option<f64>,
    pub efficiency: Option<Stats>,
    pub phi: Option<Stats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationReport {
    pub reps: u64,
    pub failures: Vec<(u64, String)>,
    pub phi: Option<Stats>,
    pub threshold: Option<Stats>,
    pub efficiency: Option<Stats>,
    pub n_selected: Option<Stats>,
    pub checkpoints: Vec<CheckpointAggregate>,
    /// Least-squares slope of the mean log distance against `log10 k` over
    /// the last decade of checkpoints.
    pub slope_last_decade: Option<f64>,
}

/// About `per_decade` log-spaced integers in `[lo, hi]`, always including
/// both ends.
pub fn log_checkpoints(lo: u64, hi: u64, per_decade: usize) -> Vec<u64> {
    if lo == 0 || hi < lo {
        return Vec::new();
    }
    let (a, b) = ((lo as f64).log10(), (hi as f64).log10());
    let steps = (((b - a) * per_decade as f64).ceil() as usize).max(1);
    let mut out: Vec<u64> = (0..=steps)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / steps as f64).round() as u64)
        .map(|k| k.clamp(lo, hi))
        .collect();
    out.dedup();
    out
}

/// Slope of the least-squares line through `(log10 k, y)` for `k` in
/// `[k_max / 10, k_max]`.
pub fn last_decade_slope(points: &[(u64, f64)]) -> Option<f64> {
    let k_max = points.iter().map(|p| p.0).max()? as f64;
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(k, y)| *k as f64 >= k_max / 10.0 && y.is_finite())
        .map(|&(k, y)| ((k as f64).log10(), y))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Runs replications `0..reps` of `base` in parallel. Per-run errors are
/// collected in the report rather than aborting the batch.
pub fn run_replications(
    base: &ExperimentConfig,
    reps: u64,
    opts: &RunOptions,
) -> Result<(ReplicationReport, Vec<RunReport>)> {
    ensure!(reps >= 1, "need at least one replication");
    ensure!(opts.trace_path.is_none() && opts.record_stream.is_none(), "file sinks are per run, not per batch");
    let results: Vec<(u64, Result<RunReport>)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let cfg = ExperimentConfig { rep, ..base.clone() };
            (rep, run_experiment(&cfg, opts))
        })
        .collect();
    let mut failures = Vec::new();
    let mut runs = Vec::new();
    for (rep, r) in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e) => failures.push((rep, format!("{e:#}"))),
        }
    }
    Ok((reduce(reps, failures, &runs), runs))
}

pub fn reduce(reps: u64, failures: Vec<(u64, String)>, runs: &[RunReport]) -> ReplicationReport {
    let collect = |f: &dyn Fn(&RunReport) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
    let mut ks: Vec<u64> = runs.iter().flat_map(|r| r.checkpoints.iter().map(|c| c.k)).collect();
    ks.sort_unstable();
    ks.dedup();
    let checkpoints: Vec<CheckpointAggregate> = ks
        .into_iter()
        .map(|k| {
            let at: Vec<_> = runs.iter().filter_map(|r| r.checkpoints.iter().find(|c| c.k == k)).collect();
            let dist: Vec<f64> = at.iter().filter_map(|c| c.distance).map(f64::log10).collect();
            let eff: Vec<f64> = at.iter().filter_map(|c| c.efficiency).collect();
            let phi: Vec<f64> = at.iter().map(|c| c.phi).filter(|v| v.is_finite()).collect();
            CheckpointAggregate {
                k,
                runs: at.len(),
                mean_log10_distance: (!dist.is_empty()).then(|| dist.iter().sum::<f64>() / dist.len() as f64),
                efficiency: Stats::new(&eff),
                phi: Stats::new(&phi),
            }
        })
        .collect();
    let curve: Vec<(u64, f64)> = checkpoints.iter().filter_map(|c| c.mean_log10_distance.map(|d| (c.k, d))).collect();
    ReplicationReport {
        reps,
        failures,
        phi: Stats::new(&collect(&|r| Some(r.summary.phi))),
        threshold: Stats::new(&collect(&|r| r.summary.threshold)),
        efficiency: Stats::new(&collect(&|r| r.summary.efficiency)),
        n_selected: Stats::new(&collect(&|r| Some(r.summary.n_selected as f64))),
        slope_last_decade: last_decade_slope(&curve),
        checkpoints,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_basics() {
        let s = Stats::new(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(s.mean, 2.5);
        assert_eq!(s.median, 2.5);
        assert!((s.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(Stats::new(&[]).is_none());
        assert_eq!(Stats::new(&[7.0]).unwrap().sd, 0.0);
    }

    #[test]
    fn checkpoints_are_log_spaced() {
        let c = log_checkpoints(10, 10_000, 4);
        assert_eq!(c.first(), Some(&10));
        assert_eq!(c.last(), Some(&10_000));
        assert!(c.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(c.len(), 13);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<(u64, f64)> =
            log_checkpoints(10, 100_000, 5).into_iter().map(|k| (k, 0.3 - 0.5 * (k as f64).log10())).collect();
        assert!((last_decade_slope(&pts).unwrap() + 0.5).abs() < 1e-12);
        assert!(last_decade_slope(&pts[..1]).is_none());
    }
}
