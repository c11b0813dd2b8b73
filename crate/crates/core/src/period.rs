//! Period adaptation for one security task on one core.
//!
//! With every interfering period fixed, the interference bound is affine in
//! the candidate period `T`: `I(T) = B' + T * U`, where `B'` sums the
//! interfering WCETs and `U` their utilizations. The schedulability
//! constraint `C + I(T) <= T` then reads `T * (1 - U) >= C + B'`, so the
//! shortest feasible period (and hence the largest tightness) has a closed
//! form.

use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::model::{ratio, Allocation, Rational, SecurityTask, SystemConfig, Time};
use crate::schedulability::InterferenceBound;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeriodSolution {
    pub period: Time,
    pub tightness: Rational,
    /// `T - C - I(T)` at the chosen period.
    pub slack: Rational,
}

/// Tightness of monitoring at period `t` against desired period `t_des`.
pub fn tightness(t_des: Time, t: Time) -> Result<Rational> {
    if t_des.0 == 0 || t < t_des {
        return Err(Error::PeriodBelowDesired {
            desired: t_des,
            period: t,
        });
    }
    Ok(ratio(t_des.0, t.0))
}

/// Shortest feasible period of `task` on `core` given the periods already
/// fixed in `alloc`. `Ok(None)` when no period in `[T_des, T_max]` works.
pub fn optimize_period(
    task: &SecurityTask,
    core: usize,
    config: &SystemConfig,
    alloc: &Allocation,
) -> Result<Option<PeriodSolution>> {
    let bound = InterferenceBound::for_task(task, core, config, alloc)?;
    Ok(optimize_with_bound(task, &bound))
}

/// Closed-form solution against a precomputed interference bound.
pub fn optimize_with_bound(task: &SecurityTask, bound: &InterferenceBound) -> Option<PeriodSolution> {
    let spare = Rational::one() - &bound.rate;
    if !spare.is_positive() {
        return None;
    }
    let demand = (task.wcet + bound.base).to_rational();
    let shortest = (&demand / &spare).ceil().to_integer();
    let shortest = shortest.to_u64()?;
    let period = Time(shortest.max(task.desired_period.0));
    if period > task.max_period {
        return None;
    }
    let slack = period.to_rational() * &spare - demand;
    // Rounding up keeps the slack non-negative while 1 - U > 0.
    debug_assert!(!slack.is_negative());
    if slack.is_negative() {
        return None;
    }
    Some(PeriodSolution {
        period,
        tightness: ratio(task.desired_period.0, period.0),
        slack,
    })
}

/// Weighted cumulative tightness of a complete allocation.
pub fn objective_value(alloc: &Allocation, sec_tasks: &[SecurityTask]) -> Result<Rational> {
    sec_tasks.iter().try_fold(Rational::zero(), |acc, task| {
        let eta = alloc
            .tightness_of(&task.id)
            .ok_or_else(|| Error::MissingAssignment(task.id.clone()))?;
        Ok(acc + &task.weight * eta)
    })
}

/// Helper for reports: the exact rational as a float.
pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}
