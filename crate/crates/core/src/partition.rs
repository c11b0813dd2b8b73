//! Best-fit partitioning of real-time tasks onto cores.

use std::cmp::Ordering;

use num_traits::Zero;

use crate::model::{Platform, Rational, RealTimeTask, TaskId};
use crate::schedulability::core_schedulable;

/// The first task (in placement order) that no core could admit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PartitionFailure(pub TaskId);

fn by_decreasing_utilization(a: &RealTimeTask, b: &RealTimeTask) -> Ordering {
    // a.C / a.T > b.C / b.T  <=>  a.C * b.T > b.C * a.T
    let lhs = a.wcet.0 as u128 * b.period.0 as u128;
    let rhs = b.wcet.0 as u128 * a.period.0 as u128;
    rhs.cmp(&lhs).then_with(|| a.id.cmp(&b.id))
}

/// Places tasks in decreasing-utilization order, each on the most utilized
/// core that still passes response-time analysis. Priorities must already be
/// assigned.
pub fn best_fit_partition(rt_tasks: &[RealTimeTask], core_count: usize) -> Result<Platform, PartitionFailure> {
    let mut order: Vec<&RealTimeTask> = rt_tasks.iter().collect();
    order.sort_by(|a, b| by_decreasing_utilization(a, b));

    let mut cores: Vec<Vec<&RealTimeTask>> = vec![Vec::new(); core_count];
    let mut load: Vec<Rational> = vec![Rational::zero(); core_count];
    let mut platform = Platform::new(core_count);

    for task in order {
        let mut best: Option<usize> = None;
        for core in 0..core_count {
            if let Some(b) = best {
                if load[core] <= load[b] {
                    continue;
                }
            }
            let mut trial = cores[core].clone();
            trial.push(task);
            if core_schedulable(&trial) {
                best = Some(core);
            }
        }
        let core = best.ok_or_else(|| PartitionFailure(task.id.clone()))?;
        cores[core].push(task);
        load[core] += task.utilization();
        platform.rt_partition.insert(task.id.clone(), core);
    }
    Ok(platform)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assign_rm_priorities, Time};
    use crate::schedulability::{default_horizon, necessary_condition};

    fn tasks(spec: &[(&str, u64, u64)]) -> Vec<RealTimeTask> {
        assign_rm_priorities(
            spec.iter()
                .map(|&(id, c, t)| RealTimeTask::new(id, Time::ms(c), Time::ms(t)))
                .collect(),
        )
    }

    #[test]
    fn heavy_pair_is_split() {
        let rt = tasks(&[("a", 6, 10), ("b", 6, 10)]);
        let p = best_fit_partition(&rt, 2).unwrap();
        assert_ne!(p.core_of(&"a".into()), p.core_of(&"b".into()));
    }

    #[test]
    fn best_fit_fills_first_core() {
        // 0.4, 0.3, 0.2 with harmonic periods: all three fit one core under RM.
        let rt = tasks(&[("x", 6, 20), ("y", 8, 40), ("z", 4, 10)]);
        let p = best_fit_partition(&rt, 2).unwrap();
        for id in ["x", "y", "z"] {
            assert_eq!(p.core_of(&id.into()), Some(0), "{id}");
        }
    }

    #[test]
    fn best_fit_prefers_fuller_core() {
        // z (0.5) -> core 0; x (0.467) does not fit with z at these periods -> core 1;
        // y (0.1) fits both, best fit picks the fuller core 0.
        let rt = tasks(&[("z", 5, 10), ("x", 7, 15), ("y", 10, 100)]);
        let p = best_fit_partition(&rt, 2).unwrap();
        assert_eq!(p.core_of(&"z".into()), Some(0));
        assert_eq!(p.core_of(&"x".into()), Some(1));
        assert_eq!(p.core_of(&"y".into()), Some(0));
    }

    #[test]
    fn overload_fails() {
        let rt = tasks(&[("a", 10, 10), ("b", 9, 10)]);
        assert_eq!(best_fit_partition(&rt, 1), Err(PartitionFailure("b".into())));
    }

    use proptest::prelude::*;

    proptest! {
        #[test]
        fn partitions_are_schedulable(spec in proptest::collection::vec((1u64..40, 10u64..100), 1..10), m in 1usize..4) {
            let rt = assign_rm_priorities(spec.iter().enumerate()
                .map(|(i, &(c, t))| RealTimeTask::new(format!("t{i}"), Time(c.min(t)), Time(t)))
                .collect());
            if let Ok(p) = best_fit_partition(&rt, m) {
                for core in 0..m {
                    let on: Vec<_> = rt.iter().filter(|t| p.core_of(&t.id) == Some(core)).collect();
                    prop_assert!(core_schedulable(&on));
                }
                prop_assert!(necessary_condition(&rt, m, default_horizon(&rt)));
                prop_assert_eq!(best_fit_partition(&rt, m).unwrap(), p);
            }
        }
    }
}
