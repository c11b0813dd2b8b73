//! Security-task allocators: the greedy per-task HYDRA heuristic, the
//! dedicated-core baseline, and an exhaustive search over assignments.

use std::fmt;

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::model::{int, ratio, Allocation, Platform, Rational, SecurityTask, SystemConfig, TaskId};
use crate::partition::best_fit_partition;
use crate::period::{objective_value, optimize_with_bound};
use crate::schedulability::{security_schedulable, InterferenceBound};

/// Why an allocator gave up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Unschedulable {
    /// No core offers a feasible period for this security task.
    Task(TaskId),
    /// The real-time tasks could not be packed onto the available cores.
    RtPartitionFailed(TaskId),
}

impl fmt::Display for Unschedulable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unschedulable::Task(id) => write!(f, "no feasible core for security task `{id}`"),
            Unschedulable::RtPartitionFailed(id) => {
                write!(f, "real-time partitioning failed at `{id}`")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AllocationOutcome {
    pub result: std::result::Result<Allocation, Unschedulable>,
    /// Weighted cumulative tightness; zero when unschedulable.
    pub objective: Rational,
    /// Sum of `C_s / T_s` of the security tasks on each core.
    pub per_core_security_util: Vec<Rational>,
    /// Real-time partition the allocation was computed against.
    pub platform: Platform,
}

impl AllocationOutcome {
    fn unschedulable(reason: Unschedulable, platform: Platform) -> Self {
        let cores = platform.core_count;
        AllocationOutcome {
            result: Err(reason),
            objective: Rational::zero(),
            per_core_security_util: vec![Rational::zero(); cores],
            platform,
        }
    }

    fn schedulable(config: &SystemConfig, alloc: Allocation, platform: Platform) -> Result<Self> {
        let objective = objective_value(&alloc, &config.sec_tasks)?;
        let mut util = vec![Rational::zero(); platform.core_count];
        for task in &config.sec_tasks {
            let core = alloc
                .core_of(&task.id)
                .ok_or_else(|| Error::MissingAssignment(task.id.clone()))?;
            let period = alloc.period_of(&task.id).expect("complete allocation");
            util[core] += ratio(task.wcet.0, period.0);
        }
        Ok(AllocationOutcome {
            result: Ok(alloc),
            objective,
            per_core_security_util: util,
            platform,
        })
    }

    pub fn is_schedulable(&self) -> bool {
        self.result.is_ok()
    }

    pub fn allocation(&self) -> Option<&Allocation> {
        self.result.as_ref().ok()
    }

    /// Config with this outcome's real-time partition.
    pub fn config_for(&self, config: &SystemConfig) -> SystemConfig {
        SystemConfig {
            platform: self.platform.clone(),
            ..config.clone()
        }
    }
}

fn rt_bounds(config: &SystemConfig) -> Vec<InterferenceBound> {
    (0..config.core_count())
        .map(|core| {
            let mut b = InterferenceBound::empty(core);
            for rt in config.rt_on_core(core) {
                b.add(rt.wcet, rt.period);
            }
            b
        })
        .collect()
}

/// Re-checks every security task against the exact interference bound.
pub fn verify_allocation(config: &SystemConfig, alloc: &Allocation) -> Result<Option<TaskId>> {
    for task in &config.sec_tasks {
        let core = alloc
            .core_of(&task.id)
            .ok_or_else(|| Error::MissingAssignment(task.id.clone()))?;
        let period = alloc
            .period_of(&task.id)
            .ok_or_else(|| Error::PeriodNotFixed(task.id.clone()))?;
        if !security_schedulable(task, core, config, alloc, period)? {
            return Ok(Some(task.id.clone()));
        }
    }
    Ok(None)
}

fn checked(config: &SystemConfig, alloc: Allocation, platform: Platform) -> Result<AllocationOutcome> {
    if let Some(id) = verify_allocation(config, &alloc)? {
        return Err(Error::InvalidConfig(format!(
            "allocation of `{id}` fails the schedulability re-check"
        )));
    }
    AllocationOutcome::schedulable(config, alloc, platform)
}

/// Walks security tasks from highest priority down and puts each on the core
/// where its shortest feasible period yields the largest tightness, lowest
/// core index first on ties.
pub fn hydra_allocate(config: &SystemConfig) -> Result<AllocationOutcome> {
    let mut bounds = rt_bounds(config);
    let mut alloc = Allocation::new();
    for task in config.sec_by_priority() {
        let mut best: Option<(usize, crate::period::PeriodSolution)> = None;
        for (core, bound) in bounds.iter().enumerate() {
            let Some(sol) = optimize_with_bound(task, bound) else {
                continue;
            };
            if best.as_ref().is_none_or(|(_, b)| sol.tightness > b.tightness) {
                best = Some((core, sol));
            }
        }
        let Some((core, sol)) = best else {
            return Ok(AllocationOutcome::unschedulable(
                Unschedulable::Task(task.id.clone()),
                config.platform.clone(),
            ));
        };
        alloc.place(task, core, sol.period)?;
        bounds[core].add(task.wcet, sol.period);
    }
    checked(config, alloc, config.platform.clone())
}

/// Packs the real-time tasks onto the first `M - 1` cores and runs every
/// security task on the last core.
pub fn single_core_allocate(config: &SystemConfig) -> Result<AllocationOutcome> {
    let cores = config.core_count();
    let rt_cores = cores.saturating_sub(1);
    let mut platform = match best_fit_partition(&config.rt_tasks, rt_cores) {
        Ok(p) => p,
        Err(fail) => {
            return Ok(AllocationOutcome::unschedulable(
                Unschedulable::RtPartitionFailed(fail.0),
                config.platform.clone(),
            ))
        }
    };
    platform.core_count = cores;
    let dedicated = cores - 1;
    let shifted = SystemConfig {
        platform: platform.clone(),
        ..config.clone()
    };

    let mut bound = InterferenceBound::empty(dedicated);
    let mut alloc = Allocation::new();
    for task in shifted.sec_by_priority() {
        let Some(sol) = optimize_with_bound(task, &bound) else {
            return Ok(AllocationOutcome::unschedulable(
                Unschedulable::Task(task.id.clone()),
                platform,
            ));
        };
        alloc.place(task, dedicated, sol.period)?;
        bound.add(task.wcet, sol.period);
    }
    checked(&shifted, alloc, platform)
}

/// Number of assignment vectors `M^N`, saturating.
pub fn assignment_count(cores: usize, tasks: usize) -> u128 {
    (cores as u128).checked_pow(tasks as u32).unwrap_or(u128::MAX)
}

struct Search<'a> {
    tasks: Vec<&'a SecurityTask>,
    best: Option<(Rational, Vec<(usize, crate::model::Time)>)>,
}

impl Search<'_> {
    fn explore(
        &mut self,
        depth: usize,
        bounds: &mut Vec<InterferenceBound>,
        chosen: &mut Vec<(usize, crate::model::Time)>,
        score: Rational,
    ) {
        if depth == self.tasks.len() {
            // Enumeration is lexicographic, so only a strictly better score replaces.
            if self.best.as_ref().is_none_or(|(b, _)| score > *b) {
                self.best = Some((score, chosen.clone()));
            }
            return;
        }
        let task = self.tasks[depth];
        for core in 0..bounds.len() {
            let Some(sol) = optimize_with_bound(task, &bounds[core]) else {
                continue;
            };
            let saved = bounds[core].clone();
            bounds[core].add(task.wcet, sol.period);
            chosen.push((core, sol.period));
            let next = &score + &task.weight * &sol.tightness;
            self.explore(depth + 1, bounds, chosen, next);
            chosen.pop();
            bounds[core] = saved;
        }
    }
}

/// Tries every assignment of security tasks to cores. For each assignment,
/// periods are fixed greedily in priority order (shortest feasible period per
/// task), and the assignment with the largest objective wins.
pub fn exhaustive_optimal(config: &SystemConfig, max_assignments: u128) -> Result<AllocationOutcome> {
    let required = assignment_count(config.core_count(), config.sec_tasks.len());
    if required > max_assignments {
        return Err(Error::LimitExceeded {
            required,
            limit: max_assignments,
        });
    }
    let mut search = Search {
        tasks: config.sec_by_priority(),
        best: None,
    };
    let mut bounds = rt_bounds(config);
    search.explore(0, &mut bounds, &mut Vec::new(), Rational::zero());

    let Some((_, chosen)) = search.best else {
        // Report the first task in priority order that has no feasible core
        // even in isolation, else the lowest-priority one.
        let bounds = rt_bounds(config);
        let tasks = config.sec_by_priority();
        let culprit = tasks
            .iter()
            .find(|t| bounds.iter().all(|b| optimize_with_bound(t, b).is_none()))
            .or(tasks.last())
            .map(|t| t.id.clone())
            .expect("search fails only with at least one task");
        return Ok(AllocationOutcome::unschedulable(
            Unschedulable::Task(culprit),
            config.platform.clone(),
        ));
    };
    let mut alloc = Allocation::new();
    for (task, (core, period)) in search.tasks.iter().zip(chosen) {
        alloc.place(task, core, period)?;
    }
    checked(config, alloc, config.platform.clone())
}

/// Relative loss of unweighted cumulative tightness of `heuristic` against
/// `optimal`, in percent. `None` when either outcome is unschedulable.
pub fn delta_eta(optimal: &AllocationOutcome, heuristic: &AllocationOutcome) -> Option<Rational> {
    let opt = optimal.allocation()?.cumulative_tightness();
    let heu = heuristic.allocation()?.cumulative_tightness();
    if opt.is_zero() {
        return Some(Rational::zero());
    }
    Some((opt.clone() - heu) / opt * int(100))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{RealTimeTask, Time};

    fn cfg(cores: usize, rt: &[(&str, u64, u64, usize)], sec: &[(&str, u64, u64, u64)]) -> SystemConfig {
        let mut platform = Platform::new(cores);
        let rt_tasks = rt
            .iter()
            .map(|&(id, c, t, core)| {
                platform.rt_partition.insert(id.into(), core);
                RealTimeTask::new(id, Time::ms(c), Time::ms(t))
            })
            .collect();
        let sec_tasks = sec
            .iter()
            .map(|&(id, c, des, max)| SecurityTask::new(id, Time::ms(c), Time::ms(des), Time::ms(max)))
            .collect();
        SystemConfig::new(platform, rt_tasks, sec_tasks)
    }

    #[test]
    fn hydra_picks_the_lighter_core() {
        let c = cfg(2, &[("a", 2, 10, 0), ("b", 9, 10, 1)], &[("s", 1, 10, 100)]);
        let out = hydra_allocate(&c).unwrap();
        let alloc = out.allocation().unwrap();
        assert_eq!(alloc.core_of(&"s".into()), Some(0));
        assert_eq!(alloc.period_of(&"s".into()), Some(Time::ms(10)));
        assert_eq!(out.objective, int(1));
    }

    #[test]
    fn hydra_without_security_tasks() {
        let c = cfg(2, &[("a", 2, 10, 0)], &[]);
        let out = hydra_allocate(&c).unwrap();
        assert!(out.allocation().unwrap().is_empty());
        assert!(out.objective.is_zero());
    }

    #[test]
    fn hydra_reports_the_failing_task() {
        let c = cfg(2, &[("a", 10, 10, 0), ("b", 10, 10, 1)], &[("s", 1, 10, 100)]);
        let out = hydra_allocate(&c).unwrap();
        assert_eq!(out.result, Err(Unschedulable::Task("s".into())));
    }

    #[test]
    fn hydra_ties_go_to_the_lowest_core() {
        let c = cfg(3, &[], &[("s", 1, 10, 100)]);
        let out = hydra_allocate(&c).unwrap();
        assert_eq!(out.allocation().unwrap().core_of(&"s".into()), Some(0));
    }

    #[test]
    fn single_core_example() {
        let c = cfg(
            2,
            &[("a", 2, 10, 0), ("b", 3, 20, 1)],
            &[("s1", 1, 10, 100), ("s2", 1, 10, 100)],
        );
        let out = single_core_allocate(&c).unwrap();
        let alloc = out.allocation().unwrap();
        for id in ["s1", "s2"] {
            assert_eq!(alloc.core_of(&id.into()), Some(1));
            assert_eq!(alloc.period_of(&id.into()), Some(Time::ms(10)));
        }
        // Real-time tasks are moved off the dedicated core.
        assert_eq!(out.platform.core_of(&"b".into()), Some(0));
        assert_eq!(out.objective, int(2));
    }

    #[test]
    fn single_core_needs_rt_room() {
        let c = cfg(2, &[("a", 6, 10, 0), ("b", 6, 10, 1)], &[("s", 1, 10, 100)]);
        let out = single_core_allocate(&c).unwrap();
        assert!(matches!(out.result, Err(Unschedulable::RtPartitionFailed(_))));
        let c = cfg(2, &[("a", 2, 10, 0)], &[]);
        assert!(single_core_allocate(&c).unwrap().allocation().unwrap().is_empty());
    }

    #[test]
    fn exhaustive_on_one_core_matches_hydra() {
        let c = cfg(1, &[("a", 2, 10, 0)], &[("s", 1, 3, 100)]);
        assert_eq!(exhaustive_optimal(&c, 10).unwrap(), hydra_allocate(&c).unwrap());
    }

    #[test]
    fn exhaustive_dominates_on_two_by_two() {
        let c = cfg(
            2,
            &[("a", 3, 10, 0), ("b", 5, 10, 1)],
            &[("s1", 2, 5, 50), ("s2", 3, 6, 60)],
        );
        // Brute force over the four assignments by hand.
        let mut best = Rational::zero();
        for x1 in 0..2 {
            for x2 in 0..2 {
                let mut alloc = Allocation::new();
                let mut ok = true;
                let mut score = Rational::zero();
                for (task, core) in c.sec_by_priority().into_iter().zip([x1, x2]) {
                    alloc.assign(&task.id, core);
                    match crate::period::optimize_period(task, core, &c, &alloc).unwrap() {
                        Some(sol) => {
                            score += sol.tightness.clone();
                            alloc.fix_period(task, sol.period).unwrap();
                        }
                        None => ok = false,
                    }
                    if !ok {
                        break;
                    }
                }
                if ok && score > best {
                    best = score;
                }
            }
        }
        let opt = exhaustive_optimal(&c, 4).unwrap();
        let hydra = hydra_allocate(&c).unwrap();
        assert_eq!(opt.objective, best);
        assert!(opt.objective >= hydra.objective);
        assert!(delta_eta(&opt, &hydra).unwrap() >= Rational::zero());
    }

    #[test]
    fn exhaustive_guard_trips() {
        let sec: Vec<(String, u64, u64, u64)> = (0..12).map(|i| (format!("s{i}"), 1, 10, 100)).collect();
        let sec_ref: Vec<(&str, u64, u64, u64)> = sec.iter().map(|(id, c, d, m)| (id.as_str(), *c, *d, *m)).collect();
        let c = cfg(4, &[], &sec_ref);
        assert!(matches!(
            exhaustive_optimal(&c, 1_000_000),
            Err(Error::LimitExceeded { .. })
        ));
    }

    fn outcome_with(etas: &[(u64, u64)]) -> AllocationOutcome {
        let mut alloc = Allocation::new();
        for (i, &(des, t)) in etas.iter().enumerate() {
            let task = SecurityTask::new(format!("s{i}"), Time(1), Time(des), Time(des * 100));
            alloc.place(&task, 0, Time(t)).unwrap();
        }
        AllocationOutcome {
            objective: alloc.cumulative_tightness(),
            result: Ok(alloc),
            per_core_security_util: vec![],
            platform: Platform::new(1),
        }
    }

    #[test]
    fn delta_eta_examples() {
        let opt = outcome_with(&[(10, 10), (10, 10)]);
        assert_eq!(delta_eta(&opt, &opt.clone()), Some(Rational::zero()));
        let heu = outcome_with(&[(10, 10), (8, 10)]);
        assert_eq!(delta_eta(&opt, &heu), Some(int(10)));
        let failed = AllocationOutcome::unschedulable(Unschedulable::Task("x".into()), Platform::new(1));
        assert_eq!(delta_eta(&opt, &failed), None);
    }
}
