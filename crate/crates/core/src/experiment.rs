//! Batch experiments over generated tasksets.
//!
//! Every experiment expands into a fixed list of work items, runs them on a
//! rayon pool and returns rows in item order, so output does not depend on
//! how many workers ran it.

use std::fmt;

use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::alloc::{delta_eta, exhaustive_optimal, hydra_allocate, single_core_allocate, AllocationOutcome};
use crate::error::{Error, Result};
use crate::io::{decimal, DECIMAL_DIGITS};
use crate::model::{int, ratio, Rational, Time};
use crate::sim::{inject_attacks, mean, mean_detection_improvement, simulate, Detections};
use crate::taskgen::{derive_seed, generate_taskset, sweep_with, GenParams, SweepItem};

/// Environment variable holding the worker thread count.
pub const WORKERS_ENV: &str = "SECALLOC_WORKERS";

/// Runs `f` on a pool sized by [`WORKERS_ENV`], or rayon's default.
pub fn with_workers<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    let workers = match std::env::var(WORKERS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map_err(|_| Error::InvalidParam {
            field: "SECALLOC_WORKERS",
            reason: format!("`{v}` is not a thread count"),
        })?,
        Err(_) => 0,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(pool.install(f))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RowStatus {
    Ok,
    GenerationFailed,
    OptimalUnschedulable,
    HydraUnschedulable,
    SingleCoreUnschedulable,
    LimitExceeded,
    Error,
}

impl fmt::Display for RowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RowStatus::Ok => "ok",
            RowStatus::GenerationFailed => "generation_failed",
            RowStatus::OptimalUnschedulable => "optimal_unschedulable",
            RowStatus::HydraUnschedulable => "hydra_unschedulable",
            RowStatus::SingleCoreUnschedulable => "single_core_unschedulable",
            RowStatus::LimitExceeded => "limit_exceeded",
            RowStatus::Error => "error",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug)]
pub struct AppendixParams {
    pub cores: usize,
    pub sec_count: (usize, usize),
    pub replications: usize,
    pub master_seed: u64,
    pub max_assignments: u128,
}

impl Default for AppendixParams {
    fn default() -> Self {
        AppendixParams {
            cores: 2,
            sec_count: (2, 6),
            replications: 25,
            master_seed: 1,
            max_assignments: 1 << 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppendixRow {
    pub point: usize,
    pub utilization: Rational,
    pub replication: usize,
    pub seed: u64,
    pub status: RowStatus,
    pub sec_tasks: usize,
    pub optimal_tightness: Option<Rational>,
    pub hydra_tightness: Option<Rational>,
    pub delta_eta: Option<Rational>,
}

fn appendix_row(item: &SweepItem, max_assignments: u128) -> AppendixRow {
    let mut row = AppendixRow {
        point: item.point,
        utilization: item.params.total_rt_util.clone(),
        replication: item.replication,
        seed: item.params.seed,
        status: RowStatus::Ok,
        sec_tasks: 0,
        optimal_tightness: None,
        hydra_tightness: None,
        delta_eta: None,
    };
    let config = match generate_taskset(&item.params) {
        Ok(c) => c,
        Err(e) => {
            log::debug!("point {} rep {}: {e}", item.point, item.replication);
            row.status = RowStatus::GenerationFailed;
            return row;
        }
    };
    row.sec_tasks = config.sec_tasks.len();
    let optimal = match exhaustive_optimal(&config, max_assignments) {
        Ok(o) => o,
        Err(Error::LimitExceeded { .. }) => {
            row.status = RowStatus::LimitExceeded;
            return row;
        }
        Err(e) => {
            log::warn!("point {} rep {}: {e}", item.point, item.replication);
            row.status = RowStatus::Error;
            return row;
        }
    };
    let hydra = match hydra_allocate(&config) {
        Ok(h) => h,
        Err(e) => {
            log::warn!("point {} rep {}: {e}", item.point, item.replication);
            row.status = RowStatus::Error;
            return row;
        }
    };
    row.optimal_tightness = optimal.allocation().map(|a| a.cumulative_tightness());
    row.hydra_tightness = hydra.allocation().map(|a| a.cumulative_tightness());
    row.delta_eta = delta_eta(&optimal, &hydra);
    row.status = match (optimal.is_schedulable(), hydra.is_schedulable()) {
        (true, true) => RowStatus::Ok,
        (false, _) => RowStatus::OptimalUnschedulable,
        (true, false) => RowStatus::HydraUnschedulable,
    };
    row
}

/// Exhaustive search against HYDRA over the utilization sweep.
pub fn appendix_compare(p: &AppendixParams) -> Vec<AppendixRow> {
    let sec_count = p.sec_count;
    let items = sweep_with(p.cores, p.replications, p.master_seed, |g| GenParams { sec_count, ..g });
    items
        .par_iter()
        .map(|item| appendix_row(item, p.max_assignments))
        .collect()
}

#[derive(Clone, Debug)]
pub struct DetectionParams {
    pub cores: Vec<usize>,
    pub configs: usize,
    /// Real-time utilization as a fraction of the core count.
    pub util_fraction: Rational,
    pub duration: Time,
    pub attacks: usize,
    pub master_seed: u64,
}

impl Default for DetectionParams {
    fn default() -> Self {
        DetectionParams {
            cores: vec![2, 4, 8],
            configs: 25,
            util_fraction: ratio(1, 2),
            duration: Time::s(50),
            attacks: 100,
            master_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRun {
    pub cores: usize,
    pub config: usize,
    pub seed: u64,
    pub status: RowStatus,
    pub hydra: Detections,
    pub single_core: Detections,
    /// Mean-latency improvement of HYDRA over SingleCore, in percent.
    pub improvement: Option<Rational>,
}

impl DetectionRun {
    pub fn hydra_mean(&self) -> Option<Rational> {
        mean(&self.hydra.latencies()).ok()
    }

    pub fn single_core_mean(&self) -> Option<Rational> {
        mean(&self.single_core.latencies()).ok()
    }
}

fn detect_with(
    config: &crate::model::SystemConfig,
    outcome: &AllocationOutcome,
    p: &DetectionParams,
    plan: &crate::sim::AttackPlan,
) -> Result<Detections> {
    let alloc = outcome.allocation().expect("schedulable outcome");
    let config = outcome.config_for(config);
    Ok(simulate(&config, alloc, p.duration, plan)?.detections)
}

fn detection_run(cores: usize, index: usize, p: &DetectionParams) -> DetectionRun {
    let seed = derive_seed(p.master_seed ^ (cores as u64) << 32, index as u64);
    let mut run = DetectionRun {
        cores,
        config: index,
        seed,
        status: RowStatus::Ok,
        hydra: Detections::default(),
        single_core: Detections::default(),
        improvement: None,
    };
    let util = &p.util_fraction * int(cores as u64);
    let config = match generate_taskset(&GenParams::new(cores, util, seed)) {
        Ok(c) => c,
        Err(e) => {
            log::debug!("M={cores} config {index}: {e}");
            run.status = RowStatus::GenerationFailed;
            return run;
        }
    };
    let (hydra, single) = match (hydra_allocate(&config), single_core_allocate(&config)) {
        (Ok(h), Ok(s)) => (h, s),
        (Err(e), _) | (_, Err(e)) => {
            log::warn!("M={cores} config {index}: {e}");
            run.status = RowStatus::Error;
            return run;
        }
    };
    if !hydra.is_schedulable() {
        run.status = RowStatus::HydraUnschedulable;
        return run;
    }
    if !single.is_schedulable() {
        run.status = RowStatus::SingleCoreUnschedulable;
        return run;
    }
    let plan = inject_attacks(&config, p.attacks, p.duration, derive_seed(seed, u64::MAX));
    match (
        detect_with(&config, &hydra, p, &plan),
        detect_with(&config, &single, p, &plan),
    ) {
        (Ok(h), Ok(s)) => {
            run.improvement = mean_detection_improvement(&h.latencies(), &s.latencies()).ok();
            run.hydra = h;
            run.single_core = s;
        }
        (Err(e), _) | (_, Err(e)) => {
            log::warn!("M={cores} config {index}: {e}");
            run.status = RowStatus::Error;
        }
    }
    run
}

/// Detection latency of HYDRA and SingleCore allocations under the same
/// attack plan, for every core count.
pub fn detection_cdf(p: &DetectionParams) -> Vec<DetectionRun> {
    let items: Vec<(usize, usize)> = p
        .cores
        .iter()
        .flat_map(|&m| (0..p.configs).map(move |i| (m, i)))
        .collect();
    items.par_iter().map(|&(m, i)| detection_run(m, i, p)).collect()
}

/// Average of the per-config improvements for `cores`, over runs where both
/// schemes produced samples.
pub fn average_improvement(runs: &[DetectionRun], cores: usize) -> Option<Rational> {
    let values: Vec<&Rational> = runs
        .iter()
        .filter(|r| r.cores == cores)
        .filter_map(|r| r.improvement.as_ref())
        .collect();
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(Rational::zero(), |acc, v| acc + *v);
    Some(sum / int(values.len() as u64))
}

#[derive(Clone, Debug)]
pub struct SweepParams {
    pub cores: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            cores: vec![2, 4, 8],
            replications: 25,
            master_seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub cores: usize,
    pub point: usize,
    pub utilization: Rational,
    pub replication: usize,
    pub seed: u64,
    pub generated: bool,
    pub hydra: bool,
    pub single_core: bool,
}

fn sweep_row(cores: usize, item: &SweepItem) -> SweepRow {
    let mut row = SweepRow {
        cores,
        point: item.point,
        utilization: item.params.total_rt_util.clone(),
        replication: item.replication,
        seed: item.params.seed,
        generated: false,
        hydra: false,
        single_core: false,
    };
    let Ok(config) = generate_taskset(&item.params) else {
        return row;
    };
    row.generated = true;
    row.hydra = hydra_allocate(&config).is_ok_and(|o| o.is_schedulable());
    row.single_core = single_core_allocate(&config).is_ok_and(|o| o.is_schedulable());
    row
}

/// Per-config acceptance of both schemes over the utilization sweep of every
/// core count. A config that could not be generated counts as rejected.
pub fn schedulability_sweep(p: &SweepParams) -> Vec<SweepRow> {
    let items: Vec<(usize, SweepItem)> = p
        .cores
        .iter()
        .flat_map(|&m| {
            sweep_with(m, p.replications, p.master_seed, |g| g)
                .into_iter()
                .map(move |i| (m, i))
        })
        .collect();
    items.par_iter().map(|(m, item)| sweep_row(*m, item)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcceptanceRatio {
    pub cores: usize,
    pub point: usize,
    pub utilization: Rational,
    pub total: usize,
    pub generated: usize,
    pub hydra: usize,
    pub single_core: usize,
}

impl AcceptanceRatio {
    pub fn hydra_ratio(&self) -> Rational {
        ratio(self.hydra as u64, self.total.max(1) as u64)
    }

    pub fn single_core_ratio(&self) -> Rational {
        ratio(self.single_core as u64, self.total.max(1) as u64)
    }
}

/// Groups sweep rows by core count and utilization point, in first-seen order.
pub fn acceptance_ratios(rows: &[SweepRow]) -> Vec<AcceptanceRatio> {
    let mut out: Vec<AcceptanceRatio> = Vec::new();
    for r in rows {
        let idx = match out.iter().position(|a| a.cores == r.cores && a.point == r.point) {
            Some(i) => i,
            None => {
                out.push(AcceptanceRatio {
                    cores: r.cores,
                    point: r.point,
                    utilization: r.utilization.clone(),
                    total: 0,
                    generated: 0,
                    hydra: 0,
                    single_core: 0,
                });
                out.len() - 1
            }
        };
        let a = &mut out[idx];
        a.total += 1;
        a.generated += r.generated as usize;
        a.hydra += r.hydra as usize;
        a.single_core += r.single_core as usize;
    }
    out
}

fn opt_decimal(v: &Option<Rational>) -> String {
    v.as_ref().map(|r| decimal(r, DECIMAL_DIGITS)).unwrap_or_default()
}

#[derive(Serialize)]
pub struct AppendixCsvRow {
    pub point: usize,
    pub utilization: String,
    pub replication: usize,
    pub seed: u64,
    pub status: RowStatus,
    pub sec_tasks: usize,
    pub optimal_tightness: String,
    pub hydra_tightness: String,
    pub delta_eta_percent: String,
}

impl From<&AppendixRow> for AppendixCsvRow {
    fn from(r: &AppendixRow) -> Self {
        AppendixCsvRow {
            point: r.point,
            utilization: decimal(&r.utilization, DECIMAL_DIGITS),
            replication: r.replication,
            seed: r.seed,
            status: r.status,
            sec_tasks: r.sec_tasks,
            optimal_tightness: opt_decimal(&r.optimal_tightness),
            hydra_tightness: opt_decimal(&r.hydra_tightness),
            delta_eta_percent: opt_decimal(&r.delta_eta),
        }
    }
}

#[derive(Serialize)]
pub struct DetectionSummaryCsvRow {
    pub cores: usize,
    pub config: usize,
    pub seed: u64,
    pub status: RowStatus,
    pub hydra_samples: usize,
    pub hydra_censored: usize,
    pub hydra_mean_us: String,
    pub single_core_samples: usize,
    pub single_core_censored: usize,
    pub single_core_mean_us: String,
    pub improvement_percent: String,
}

impl From<&DetectionRun> for DetectionSummaryCsvRow {
    fn from(r: &DetectionRun) -> Self {
        DetectionSummaryCsvRow {
            cores: r.cores,
            config: r.config,
            seed: r.seed,
            status: r.status,
            hydra_samples: r.hydra.samples.len(),
            hydra_censored: r.hydra.censored,
            hydra_mean_us: opt_decimal(&r.hydra_mean()),
            single_core_samples: r.single_core.samples.len(),
            single_core_censored: r.single_core.censored,
            single_core_mean_us: opt_decimal(&r.single_core_mean()),
            improvement_percent: opt_decimal(&r.improvement),
        }
    }
}

#[derive(Serialize)]
pub struct DetectionSampleCsvRow {
    pub cores: usize,
    pub config: usize,
    pub scheme: &'static str,
    pub attack_time_us: u64,
    pub detect_time_us: u64,
    pub latency_us: u64,
    pub task: String,
}

/// Flattens every detection sample of every run, HYDRA first per run.
pub fn detection_sample_rows(runs: &[DetectionRun]) -> Vec<DetectionSampleCsvRow> {
    let mut out = Vec::new();
    for r in runs {
        for (scheme, d) in [("hydra", &r.hydra), ("single-core", &r.single_core)] {
            out.extend(d.samples.iter().map(|s| DetectionSampleCsvRow {
                cores: r.cores,
                config: r.config,
                scheme,
                attack_time_us: s.attack_time.0,
                detect_time_us: s.detect_time.0,
                latency_us: s.latency.0,
                task: s.detecting_task.0.clone(),
            }));
        }
    }
    out
}

#[derive(Serialize)]
pub struct ImprovementCsvRow {
    pub cores: usize,
    pub configs_compared: usize,
    pub mean_improvement_percent: String,
}

pub fn improvement_rows(runs: &[DetectionRun], cores: &[usize]) -> Vec<ImprovementCsvRow> {
    cores
        .iter()
        .map(|&m| ImprovementCsvRow {
            cores: m,
            configs_compared: runs.iter().filter(|r| r.cores == m && r.improvement.is_some()).count(),
            mean_improvement_percent: opt_decimal(&average_improvement(runs, m)),
        })
        .collect()
}

#[derive(Serialize)]
pub struct AcceptanceCsvRow {
    pub cores: usize,
    pub point: usize,
    pub utilization: String,
    pub scheme: &'static str,
    pub total: usize,
    pub generated: usize,
    pub accepted: usize,
    pub acceptance_ratio: String,
}

pub fn acceptance_rows(ratios: &[AcceptanceRatio]) -> Vec<AcceptanceCsvRow> {
    let mut out = Vec::with_capacity(ratios.len() * 2);
    for a in ratios {
        for (scheme, accepted, ratio) in [
            ("hydra", a.hydra, a.hydra_ratio()),
            ("single-core", a.single_core, a.single_core_ratio()),
        ] {
            out.push(AcceptanceCsvRow {
                cores: a.cores,
                point: a.point,
                utilization: decimal(&a.utilization, DECIMAL_DIGITS),
                scheme,
                total: a.total,
                generated: a.generated,
                accepted,
                acceptance_ratio: decimal(&ratio, DECIMAL_DIGITS),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::Signed;

    #[test]
    fn appendix_rows_follow_sweep_order() {
        let p = AppendixParams {
            replications: 1,
            ..Default::default()
        };
        let rows = appendix_compare(&p);
        assert_eq!(rows.len(), 39);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.point, i + 1);
            if r.status == RowStatus::Ok {
                assert!((2..=6).contains(&r.sec_tasks));
                assert!(!r.delta_eta.as_ref().unwrap().is_negative());
            }
        }
        assert_eq!(rows[0].status, RowStatus::Ok);
    }

    #[test]
    fn worker_count_does_not_change_rows() {
        let p = SweepParams {
            cores: vec![2],
            replications: 2,
            master_seed: 9,
        };
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| schedulability_sweep(&p));
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| schedulability_sweep(&p));
        assert_eq!(one, many);
        let ratios = acceptance_ratios(&one);
        assert_eq!(ratios.len(), 39);
        assert!(ratios.iter().all(|a| a.total == 2));
    }

    #[test]
    fn improvement_average_skips_missing() {
        let mk = |cores, improvement: Option<Rational>| DetectionRun {
            cores,
            config: 0,
            seed: 0,
            status: RowStatus::Ok,
            hydra: Detections::default(),
            single_core: Detections::default(),
            improvement,
        };
        let runs = vec![
            mk(2, Some(ratio(10, 1))),
            mk(2, None),
            mk(2, Some(ratio(20, 1))),
            mk(4, None),
        ];
        assert_eq!(average_improvement(&runs, 2), Some(ratio(15, 1)));
        assert_eq!(average_improvement(&runs, 4), None);
    }
}
