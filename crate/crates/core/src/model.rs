//! Domain types: time, real-time and security tasks, the platform partition,
//! and security-task allocations.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::Error;

/// Exact rational arithmetic used throughout the analysis.
pub type Rational = BigRational;

pub(crate) fn ratio(num: u64, den: u64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub(crate) fn int(v: u64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// Non-negative time in whole microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Time(pub u64);

impl Time {
    pub const ZERO: Time = Time(0);

    pub const fn us(v: u64) -> Self {
        Time(v)
    }

    pub const fn ms(v: u64) -> Self {
        Time(v * 1_000)
    }

    pub const fn s(v: u64) -> Self {
        Time(v * 1_000_000)
    }

    pub const fn as_us(self) -> u64 {
        self.0
    }

    pub fn to_rational(self) -> Rational {
        int(self.0)
    }
}

impl Add for Time {
    type Output = Time;
    fn add(self, rhs: Time) -> Time {
        Time(self.0 + rhs.0)
    }
}

impl Sub for Time {
    type Output = Time;
    fn sub(self, rhs: Time) -> Time {
        Time(self.0 - rhs.0)
    }
}

impl Mul<u64> for Time {
    type Output = Time;
    fn mul(self, rhs: u64) -> Time {
        Time(self.0 * rhs)
    }
}

impl fmt::Display for Time {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.0)
    }
}

/// Opaque task identifier.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskId(pub String);

impl TaskId {
    pub fn new(id: impl Into<String>) -> Self {
        TaskId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TaskId {
    fn from(s: &str) -> Self {
        TaskId(s.to_owned())
    }
}

/// Sporadic real-time task with an implicit deadline.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealTimeTask {
    pub id: TaskId,
    pub wcet: Time,
    pub period: Time,
    pub deadline: Time,
    /// Rank among real-time tasks, 0 is the highest priority.
    pub priority: u32,
}

impl RealTimeTask {
    /// Implicit-deadline task; priority is filled in by [`assign_rm_priorities`].
    pub fn new(id: impl Into<TaskId>, wcet: Time, period: Time) -> Self {
        RealTimeTask {
            id: id.into(),
            wcet,
            period,
            deadline: period,
            priority: 0,
        }
    }

    pub fn utilization(&self) -> Rational {
        ratio(self.wcet.0, self.period.0)
    }
}

impl From<String> for TaskId {
    fn from(s: String) -> Self {
        TaskId(s)
    }
}

/// Security (monitoring) task whose period may be stretched between its
/// desired and maximum values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecurityTask {
    pub id: TaskId,
    pub wcet: Time,
    pub desired_period: Time,
    pub max_period: Time,
    pub weight: Rational,
    /// Rank among security tasks, 0 is the highest priority.
    pub priority: u32,
}

impl SecurityTask {
    pub fn new(id: impl Into<TaskId>, wcet: Time, desired_period: Time, max_period: Time) -> Self {
        SecurityTask {
            id: id.into(),
            wcet,
            desired_period,
            max_period,
            weight: Rational::one(),
            priority: 0,
        }
    }

    pub fn with_weight(mut self, weight: Rational) -> Self {
        self.weight = weight;
        self
    }

    /// Desired monitoring frequency, in jobs per microsecond.
    pub fn desired_frequency(&self) -> Rational {
        ratio(1, self.desired_period.0)
    }
}

/// Identical cores plus the static partition of real-time tasks.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Platform {
    pub core_count: usize,
    pub rt_partition: BTreeMap<TaskId, usize>,
}

impl Platform {
    pub fn new(core_count: usize) -> Self {
        Platform {
            core_count,
            rt_partition: BTreeMap::new(),
        }
    }

    pub fn core_of(&self, id: &TaskId) -> Option<usize> {
        self.rt_partition.get(id).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemConfig {
    pub platform: Platform,
    pub rt_tasks: Vec<RealTimeTask>,
    pub sec_tasks: Vec<SecurityTask>,
}

impl SystemConfig {
    /// Builds a config and assigns both priority orders.
    pub fn new(platform: Platform, rt_tasks: Vec<RealTimeTask>, sec_tasks: Vec<SecurityTask>) -> Self {
        SystemConfig {
            platform,
            rt_tasks: assign_rm_priorities(rt_tasks),
            sec_tasks: assign_security_priorities(sec_tasks),
        }
    }

    pub fn core_count(&self) -> usize {
        self.platform.core_count
    }

    /// Real-time tasks partitioned onto `core`, highest priority first.
    pub fn rt_on_core(&self, core: usize) -> Vec<&RealTimeTask> {
        let mut tasks: Vec<_> = self
            .rt_tasks
            .iter()
            .filter(|t| self.platform.core_of(&t.id) == Some(core))
            .collect();
        tasks.sort_by_key(|t| t.priority);
        tasks
    }

    pub fn sec_task(&self, id: &TaskId) -> Option<&SecurityTask> {
        self.sec_tasks.iter().find(|t| &t.id == id)
    }

    /// Security tasks in descending priority order.
    pub fn sec_by_priority(&self) -> Vec<&SecurityTask> {
        let mut tasks: Vec<_> = self.sec_tasks.iter().collect();
        tasks.sort_by_key(|t| t.priority);
        tasks
    }

    pub fn rt_utilization(&self) -> Rational {
        self.rt_tasks
            .iter()
            .fold(Rational::zero(), |acc, t| acc + t.utilization())
    }

    /// True when every security task uses weight 1.
    pub fn unit_weights(&self) -> bool {
        self.sec_tasks.iter().all(|t| t.weight.is_one())
    }
}

/// Ranks real-time tasks rate-monotonically. Equal periods fall back to id order.
pub fn assign_rm_priorities(mut rt_tasks: Vec<RealTimeTask>) -> Vec<RealTimeTask> {
    let mut order: Vec<usize> = (0..rt_tasks.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&rt_tasks[a], &rt_tasks[b]);
        ta.period.cmp(&tb.period).then_with(|| ta.id.cmp(&tb.id))
    });
    for (rank, idx) in order.into_iter().enumerate() {
        rt_tasks[idx].priority = rank as u32;
    }
    rt_tasks
}

/// Ranks security tasks by ascending maximum period, then desired period, then id.
pub fn assign_security_priorities(mut sec_tasks: Vec<SecurityTask>) -> Vec<SecurityTask> {
    let mut order: Vec<usize> = (0..sec_tasks.len()).collect();
    order.sort_by(|&a, &b| security_order(&sec_tasks[a], &sec_tasks[b]));
    for (rank, idx) in order.into_iter().enumerate() {
        sec_tasks[idx].priority = rank as u32;
    }
    sec_tasks
}

fn security_order(a: &SecurityTask, b: &SecurityTask) -> Ordering {
    a.max_period
        .cmp(&b.max_period)
        .then_with(|| a.desired_period.cmp(&b.desired_period))
        .then_with(|| a.id.cmp(&b.id))
}

/// A single broken invariant found by [`validate_config`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    NonPositiveWcet(TaskId),
    NonPositivePeriod(TaskId),
    WcetExceedsPeriod(TaskId),
    WcetExceedsDesiredPeriod(TaskId),
    DesiredExceedsMaxPeriod(TaskId),
    NonImplicitDeadline(TaskId),
    NonPositiveWeight(TaskId),
    DuplicateId(TaskId),
    UnpartitionedTask(TaskId),
    UnknownPartitionedTask(TaskId),
    CoreOutOfRange { task: TaskId, core: usize },
    NoCores,
    PriorityNotPermutation { security: bool },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NonPositiveWcet(id) => write!(f, "{id}: non-positive wcet"),
            Violation::NonPositivePeriod(id) => write!(f, "{id}: non-positive period"),
            Violation::WcetExceedsPeriod(id) => write!(f, "{id}: wcet exceeds period"),
            Violation::WcetExceedsDesiredPeriod(id) => write!(f, "{id}: wcet exceeds desired period"),
            Violation::DesiredExceedsMaxPeriod(id) => {
                write!(f, "{id}: desired period exceeds maximum period")
            }
            Violation::NonImplicitDeadline(id) => write!(f, "{id}: deadline differs from period"),
            Violation::NonPositiveWeight(id) => write!(f, "{id}: non-positive weight"),
            Violation::DuplicateId(id) => write!(f, "{id}: duplicate task id"),
            Violation::UnpartitionedTask(id) => write!(f, "{id}: unpartitioned real-time task"),
            Violation::UnknownPartitionedTask(id) => {
                write!(f, "{id}: partition names an unknown real-time task")
            }
            Violation::CoreOutOfRange { task, core } => {
                write!(f, "{task}: core {core} out of range")
            }
            Violation::NoCores => write!(f, "platform has no cores"),
            Violation::PriorityNotPermutation { security } => write!(
                f,
                "{} priorities are not a permutation of 0..n",
                if *security { "security" } else { "real-time" }
            ),
        }
    }
}

/// Collects every invariant violation of `config`; an empty list means valid.
pub fn validate_config(config: &SystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let platform = &config.platform;
    if platform.core_count == 0 {
        out.push(Violation::NoCores);
    }

    let mut seen = BTreeSet::new();
    for t in &config.rt_tasks {
        if !seen.insert(&t.id) {
            out.push(Violation::DuplicateId(t.id.clone()));
        }
        if t.wcet.0 == 0 {
            out.push(Violation::NonPositiveWcet(t.id.clone()));
        }
        if t.period.0 == 0 {
            out.push(Violation::NonPositivePeriod(t.id.clone()));
        }
        if t.deadline != t.period {
            out.push(Violation::NonImplicitDeadline(t.id.clone()));
        }
        if t.wcet > t.deadline {
            out.push(Violation::WcetExceedsPeriod(t.id.clone()));
        }
        match platform.core_of(&t.id) {
            None => out.push(Violation::UnpartitionedTask(t.id.clone())),
            Some(core) if core >= platform.core_count => out.push(Violation::CoreOutOfRange {
                task: t.id.clone(),
                core,
            }),
            Some(_) => {}
        }
    }
    let rt_ids: BTreeSet<_> = config.rt_tasks.iter().map(|t| &t.id).collect();
    for id in platform.rt_partition.keys() {
        if !rt_ids.contains(id) {
            out.push(Violation::UnknownPartitionedTask(id.clone()));
        }
    }

    for t in &config.sec_tasks {
        if !seen.insert(&t.id) {
            out.push(Violation::DuplicateId(t.id.clone()));
        }
        if t.wcet.0 == 0 {
            out.push(Violation::NonPositiveWcet(t.id.clone()));
        }
        if t.desired_period.0 == 0 {
            out.push(Violation::NonPositivePeriod(t.id.clone()));
        }
        if t.wcet > t.desired_period {
            out.push(Violation::WcetExceedsDesiredPeriod(t.id.clone()));
        }
        if t.desired_period > t.max_period {
            out.push(Violation::DesiredExceedsMaxPeriod(t.id.clone()));
        }
        if t.weight <= Rational::zero() {
            out.push(Violation::NonPositiveWeight(t.id.clone()));
        }
    }

    if !is_permutation(config.rt_tasks.iter().map(|t| t.priority)) {
        out.push(Violation::PriorityNotPermutation { security: false });
    }
    if !is_permutation(config.sec_tasks.iter().map(|t| t.priority)) {
        out.push(Violation::PriorityNotPermutation { security: true });
    }
    out
}

fn is_permutation(ranks: impl Iterator<Item = u32>) -> bool {
    let mut ranks: Vec<u32> = ranks.collect();
    ranks.sort_unstable();
    ranks.iter().enumerate().all(|(i, &r)| r as usize == i)
}

/// Core assignment and periods of security tasks.
///
/// Tasks may be assigned before their period is fixed; allocators fix periods
/// one task at a time in priority order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Allocation {
    assignment: BTreeMap<TaskId, usize>,
    periods: BTreeMap<TaskId, Time>,
    tightness: BTreeMap<TaskId, Rational>,
}

impl Allocation {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn assign(&mut self, task: &TaskId, core: usize) {
        self.assignment.insert(task.clone(), core);
    }

    /// Fixes the period of an assigned task and records its tightness.
    pub fn fix_period(&mut self, task: &SecurityTask, period: Time) -> Result<(), Error> {
        if !self.assignment.contains_key(&task.id) {
            return Err(Error::UnknownTask(task.id.clone()));
        }
        if period < task.desired_period || period > task.max_period {
            return Err(Error::PeriodOutOfBounds {
                task: task.id.clone(),
                period,
            });
        }
        let eta = crate::period::tightness(task.desired_period, period)?;
        self.periods.insert(task.id.clone(), period);
        self.tightness.insert(task.id.clone(), eta);
        Ok(())
    }

    /// Assigns `task` to `core` with an already-solved period.
    pub fn place(&mut self, task: &SecurityTask, core: usize, period: Time) -> Result<(), Error> {
        self.assign(&task.id, core);
        self.fix_period(task, period)
    }

    pub fn core_of(&self, id: &TaskId) -> Option<usize> {
        self.assignment.get(id).copied()
    }

    pub fn period_of(&self, id: &TaskId) -> Option<Time> {
        self.periods.get(id).copied()
    }

    pub fn tightness_of(&self, id: &TaskId) -> Option<&Rational> {
        self.tightness.get(id)
    }

    pub fn assignment(&self) -> &BTreeMap<TaskId, usize> {
        &self.assignment
    }

    pub fn periods(&self) -> &BTreeMap<TaskId, Time> {
        &self.periods
    }

    pub fn tightness(&self) -> &BTreeMap<TaskId, Rational> {
        &self.tightness
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    /// Every security task of `config` is assigned and has a period.
    pub fn is_complete_for(&self, config: &SystemConfig) -> bool {
        config
            .sec_tasks
            .iter()
            .all(|t| self.assignment.contains_key(&t.id) && self.periods.contains_key(&t.id))
    }

    /// Unweighted sum of tightness values.
    pub fn cumulative_tightness(&self) -> Rational {
        self.tightness.values().fold(Rational::zero(), |acc, e| acc + e)
    }
}
