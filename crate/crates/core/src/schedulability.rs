//! Demand-bound analysis, the security-task interference bound and
//! per-core response-time analysis for rate-monotonic real-time tasks.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use log::warn;
use num_integer::Integer;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{int, ratio, Allocation, Rational, RealTimeTask, SecurityTask, SystemConfig, Time};

/// Default cap on the necessary-condition horizon (1000 s).
pub const HORIZON_CAP: Time = Time(1_000_000_000);

/// Maximum execution demand of jobs of `task` released and due within any
/// window of length `t`.
pub fn dbf(task: &RealTimeTask, t: Time) -> Time {
    if t < task.deadline {
        return Time::ZERO;
    }
    Time(((t.0 - task.deadline.0) / task.period.0 + 1) * task.wcet.0)
}

/// LCM of the real-time periods, capped at [`HORIZON_CAP`].
pub fn default_horizon(rt_tasks: &[RealTimeTask]) -> Time {
    let mut lcm: u128 = 1;
    for t in rt_tasks {
        lcm = lcm.lcm(&(t.period.0 as u128));
        if lcm > HORIZON_CAP.0 as u128 {
            warn!(
                "hyperperiod exceeds {}; necessary-condition horizon truncated",
                HORIZON_CAP
            );
            return HORIZON_CAP;
        }
    }
    Time(lcm as u64)
}

/// Checks `sum dbf(t) <= M * t` for all `0 < t <= horizon`.
///
/// For implicit deadlines `dbf(t) <= U * t`, so a taskset with total
/// utilization at most `M` passes without scanning.
pub fn necessary_condition(rt_tasks: &[RealTimeTask], cores: usize, horizon: Time) -> bool {
    let implicit = rt_tasks.iter().all(|t| t.deadline == t.period);
    let util = rt_tasks.iter().fold(Rational::zero(), |acc, t| acc + t.utilization());
    if implicit && util <= int(cores as u64) {
        return true;
    }
    necessary_condition_scan(rt_tasks, cores, horizon)
}

/// Evaluates the demand at every absolute deadline up to `horizon`. The summed
/// demand is a step function that only rises at these points.
pub fn necessary_condition_scan(rt_tasks: &[RealTimeTask], cores: usize, horizon: Time) -> bool {
    let mut heap: BinaryHeap<Reverse<(u64, usize)>> = rt_tasks
        .iter()
        .enumerate()
        .filter(|(_, t)| t.deadline <= horizon)
        .map(|(i, t)| Reverse((t.deadline.0, i)))
        .collect();
    let mut demand: u128 = 0;
    while let Some(&Reverse((d, _))) = heap.peek() {
        while let Some(&Reverse((next, i))) = heap.peek() {
            if next != d {
                break;
            }
            heap.pop();
            let task = &rt_tasks[i];
            demand += task.wcet.0 as u128;
            let following = next + task.period.0;
            if following <= horizon.0 {
                heap.push(Reverse((following, i)));
            }
        }
        if demand > cores as u128 * d as u128 {
            return false;
        }
    }
    true
}

/// Affine interference bound `I(T) = base + T * rate` seen by a security
/// task on one core, with every interfering period fixed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InterferenceBound {
    pub core: usize,
    /// Sum of the WCETs of all interfering tasks.
    pub base: Time,
    /// Sum of `C / T` over all interfering tasks.
    pub rate: Rational,
}

impl InterferenceBound {
    pub fn empty(core: usize) -> Self {
        InterferenceBound {
            core,
            base: Time::ZERO,
            rate: Rational::zero(),
        }
    }

    /// Adds one interfering task with WCET `wcet` and period `period`.
    pub fn add(&mut self, wcet: Time, period: Time) {
        self.base = self.base + wcet;
        self.rate += ratio(wcet.0, period.0);
    }

    /// Interference from real-time tasks on `core` and from higher-priority
    /// security tasks that `alloc` places on `core`.
    pub fn for_task(task: &SecurityTask, core: usize, config: &SystemConfig, alloc: &Allocation) -> Result<Self> {
        if core >= config.core_count() {
            return Err(Error::CoreOutOfRange {
                core,
                cores: config.core_count(),
            });
        }
        let mut bound = Self::empty(core);
        for rt in config.rt_on_core(core) {
            bound.add(rt.wcet, rt.period);
        }
        for hp in config.sec_tasks.iter().filter(|h| h.priority < task.priority) {
            if alloc.core_of(&hp.id) != Some(core) {
                continue;
            }
            let period = alloc
                .period_of(&hp.id)
                .ok_or_else(|| Error::PeriodNotFixed(hp.id.clone()))?;
            bound.add(hp.wcet, period);
        }
        Ok(bound)
    }

    pub fn value_at(&self, period: Time) -> Rational {
        self.base.to_rational() + period.to_rational() * &self.rate
    }
}

/// Upper bound on the interference `task` suffers on `core` within a period
/// of length `period`.
pub fn interference(
    task: &SecurityTask,
    core: usize,
    config: &SystemConfig,
    alloc: &Allocation,
    period: Time,
) -> Result<Rational> {
    // Evaluated term by term rather than through the affine form, so it can
    // serve as an independent check of it.
    if core >= config.core_count() {
        return Err(Error::CoreOutOfRange {
            core,
            cores: config.core_count(),
        });
    }
    let jobs = |other: Time| int(1) + ratio(period.0, other.0);
    let mut total = Rational::zero();
    for rt in config.rt_on_core(core) {
        total += jobs(rt.period) * int(rt.wcet.0);
    }
    for hp in config.sec_tasks.iter().filter(|h| h.priority < task.priority) {
        if alloc.core_of(&hp.id) != Some(core) {
            continue;
        }
        let hp_period = alloc
            .period_of(&hp.id)
            .ok_or_else(|| Error::PeriodNotFixed(hp.id.clone()))?;
        total += jobs(hp_period) * int(hp.wcet.0);
    }
    Ok(total)
}

/// Whether `task` completes within `period` on `core`: `C + I(T) <= T`.
pub fn security_schedulable(
    task: &SecurityTask,
    core: usize,
    config: &SystemConfig,
    alloc: &Allocation,
    period: Time,
) -> Result<bool> {
    let demand = task.wcet.to_rational() + interference(task, core, config, alloc, period)?;
    Ok(demand <= period.to_rational())
}

/// Worst-case response time of `task` under preemption by `higher`, the
/// strictly higher-priority tasks on its core. `None` when the iteration
/// passes the deadline.
pub fn rt_response_time(task: &RealTimeTask, higher: &[&RealTimeTask]) -> Option<Time> {
    let mut r = task.wcet.0;
    loop {
        if r > task.deadline.0 {
            return None;
        }
        let next = task.wcet.0 + higher.iter().map(|h| r.div_ceil(h.period.0) * h.wcet.0).sum::<u64>();
        if next == r {
            return Some(Time(r));
        }
        r = next;
    }
}

/// Response-time test for every task of one core.
pub fn core_schedulable(tasks: &[&RealTimeTask]) -> bool {
    let mut sorted: Vec<&RealTimeTask> = tasks.to_vec();
    sorted.sort_by_key(|t| t.priority);
    (0..sorted.len()).all(|i| rt_response_time(sorted[i], &sorted[..i]).is_some())
}
