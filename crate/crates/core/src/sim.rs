//! Discrete-event simulation of partitioned fixed-priority preemptive
//! scheduling, with attack injection and detection-latency statistics.
//!
//! Every task is released strictly periodically from `t = 0` and each job runs
//! for exactly its WCET. On a core, real-time tasks run at their rate-monotonic
//! ranks and security tasks run below all of them, ordered by security rank.
//! No scheduling overheads are modeled.

use std::collections::{BTreeMap, HashMap, VecDeque};

use num_integer::Integer;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::alloc::verify_allocation;
use crate::error::{Error, Result};
use crate::model::{int, ratio, validate_config, Allocation, Rational, SystemConfig, TaskId, Time};

/// Event kinds, declared in their tie-break order at equal timestamps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Completion,
    DeadlineMiss,
    Release,
    Preemption,
    AttackInjected,
    AttackDetected,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent {
    pub time: Time,
    pub kind: EventKind,
    pub task: TaskId,
    pub core: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attack {
    pub time: Time,
    pub target: TaskId,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AttackPlan {
    pub attacks: Vec<Attack>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DetectionSample {
    pub attack_time: Time,
    pub detect_time: Time,
    pub detecting_task: TaskId,
    pub latency: Time,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Detections {
    pub samples: Vec<DetectionSample>,
    /// Attacks whose detecting job does not complete inside the window.
    pub censored: usize,
}

impl Detections {
    pub fn latencies(&self) -> Vec<Time> {
        self.samples.iter().map(|s| s.latency).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SimTrace {
    pub duration: Time,
    pub events: Vec<SimEvent>,
    pub detections: Detections,
    pub deadline_misses: BTreeMap<TaskId, u64>,
}

impl SimTrace {
    pub fn total_misses(&self) -> u64 {
        self.deadline_misses.values().sum()
    }

    /// Largest observed completion minus release per task.
    pub fn worst_response_times(&self) -> BTreeMap<TaskId, Time> {
        let mut out = BTreeMap::new();
        for (task, (releases, completions)) in job_history(&self.events) {
            let worst = releases
                .iter()
                .zip(&completions)
                .map(|(r, c)| *c - *r)
                .max()
                .unwrap_or(Time::ZERO);
            out.insert(task, worst);
        }
        out
    }
}

/// Release and completion instants per task, in job order.
fn job_history(events: &[SimEvent]) -> BTreeMap<TaskId, (Vec<Time>, Vec<Time>)> {
    let mut map: BTreeMap<TaskId, (Vec<Time>, Vec<Time>)> = BTreeMap::new();
    for e in events {
        match e.kind {
            EventKind::Release => map.entry(e.task.clone()).or_default().0.push(e.time),
            EventKind::Completion => map.entry(e.task.clone()).or_default().1.push(e.time),
            _ => {}
        }
    }
    map
}

struct Slot {
    id: TaskId,
    wcet: u64,
    period: u64,
    next_release: u64,
    /// Outstanding jobs as (release, remaining work), oldest first.
    jobs: VecDeque<(u64, u64)>,
}

/// Runs one core. Slots must be sorted highest priority first.
fn run_core(
    core: usize,
    slots: &mut [Slot],
    duration: u64,
    events: &mut Vec<SimEvent>,
    misses: &mut BTreeMap<TaskId, u64>,
) {
    let push = |events: &mut Vec<SimEvent>, time: u64, kind: EventKind, id: &TaskId| {
        events.push(SimEvent {
            time: Time(time),
            kind,
            task: id.clone(),
            core,
        });
    };
    let mut t = 0u64;
    let mut running: Option<usize> = None;
    loop {
        for slot in slots.iter_mut() {
            if slot.next_release != t || t >= duration {
                continue;
            }
            if let Some(&(release, _)) = slot.jobs.back() {
                if release + slot.period == t {
                    push(events, t, EventKind::DeadlineMiss, &slot.id);
                    *misses.entry(slot.id.clone()).or_default() += 1;
                }
            }
            slot.jobs.push_back((t, slot.wcet));
            push(events, t, EventKind::Release, &slot.id);
            slot.next_release += slot.period;
        }

        let selected = slots.iter().position(|s| !s.jobs.is_empty());
        if let Some(prev) = running {
            if Some(prev) != selected && !slots[prev].jobs.is_empty() {
                push(events, t, EventKind::Preemption, &slots[prev].id);
            }
        }
        let next_release = slots
            .iter()
            .map(|s| s.next_release)
            .filter(|&r| r < duration)
            .min()
            .unwrap_or(u64::MAX);

        let Some(sel) = selected else {
            running = None;
            if next_release == u64::MAX {
                break;
            }
            t = next_release;
            continue;
        };
        let remaining = slots[sel].jobs.front().expect("selected slot has a job").1;
        let finish = t + remaining;
        if finish <= next_release {
            if finish > duration {
                break;
            }
            t = finish;
            slots[sel].jobs.pop_front();
            push(events, t, EventKind::Completion, &slots[sel].id);
            running = None;
        } else {
            slots[sel].jobs.front_mut().expect("selected slot has a job").1 -= next_release - t;
            t = next_release;
            running = Some(sel);
        }
    }

    // Jobs due exactly at the end of the window.
    for slot in slots.iter() {
        for &(release, _) in &slot.jobs {
            if release + slot.period == duration {
                push(events, duration, EventKind::DeadlineMiss, &slot.id);
                *misses.entry(slot.id.clone()).or_default() += 1;
            }
        }
    }
}

/// Simulates `config` under `alloc` for `duration` after checking that the
/// config is valid and the allocation complete and analytically schedulable.
pub fn simulate(config: &SystemConfig, alloc: &Allocation, duration: Time, plan: &AttackPlan) -> Result<SimTrace> {
    if let Some(v) = validate_config(config).first() {
        return Err(Error::InvalidConfig(v.to_string()));
    }
    if !alloc.is_complete_for(config) {
        return Err(Error::InvalidConfig(
            "allocation does not cover every security task".into(),
        ));
    }
    if let Some(id) = verify_allocation(config, alloc)? {
        return Err(Error::InvalidConfig(format!(
            "security task `{id}` fails the schedulability check"
        )));
    }
    simulate_unchecked(config, alloc, duration, plan)
}

/// [`simulate`] without the analysis precondition; deadline misses are
/// recorded rather than rejected up front.
pub fn simulate_unchecked(
    config: &SystemConfig,
    alloc: &Allocation,
    duration: Time,
    plan: &AttackPlan,
) -> Result<SimTrace> {
    let cores = config.core_count();
    let mut per_core: Vec<Vec<((u8, u32), Slot)>> = (0..cores).map(|_| Vec::new()).collect();
    for rt in &config.rt_tasks {
        let core = config
            .platform
            .core_of(&rt.id)
            .ok_or_else(|| Error::InvalidConfig(format!("`{}` is not partitioned", rt.id)))?;
        per_core[core].push(((0, rt.priority), slot(&rt.id, rt.wcet, rt.period)));
    }
    for s in &config.sec_tasks {
        let core = alloc
            .core_of(&s.id)
            .ok_or_else(|| Error::MissingAssignment(s.id.clone()))?;
        let period = alloc
            .period_of(&s.id)
            .ok_or_else(|| Error::PeriodNotFixed(s.id.clone()))?;
        if core >= cores {
            return Err(Error::CoreOutOfRange { core, cores });
        }
        per_core[core].push(((1, s.priority), slot(&s.id, s.wcet, period)));
    }

    let mut events = Vec::new();
    let mut misses = BTreeMap::new();
    for (core, mut tasks) in per_core.into_iter().enumerate() {
        tasks.sort_by_key(|(key, _)| *key);
        let mut slots: Vec<Slot> = tasks.into_iter().map(|(_, s)| s).collect();
        run_core(core, &mut slots, duration.0, &mut events, &mut misses);
    }

    let detections = detection_latency_in(&events, plan, duration, DetectionRule::NextRelease);
    for attack in &plan.attacks {
        if let Some(core) = alloc.core_of(&attack.target) {
            events.push(SimEvent {
                time: attack.time,
                kind: EventKind::AttackInjected,
                task: attack.target.clone(),
                core,
            });
        }
    }
    for d in &detections.samples {
        events.push(SimEvent {
            time: d.detect_time,
            kind: EventKind::AttackDetected,
            task: d.detecting_task.clone(),
            core: alloc.core_of(&d.detecting_task).unwrap_or_default(),
        });
    }
    events.sort_by_key(|e| (e.time, e.kind, e.core));

    Ok(SimTrace {
        duration,
        events,
        detections,
        deadline_misses: misses,
    })
}

fn slot(id: &TaskId, wcet: Time, period: Time) -> Slot {
    Slot {
        id: id.clone(),
        wcet: wcet.0,
        period: period.0,
        next_release: 0,
        jobs: VecDeque::new(),
    }
}

/// `count` attacks at uniform integer instants in `(0, duration)`, each on a
/// uniformly chosen security task. Sorted by time.
pub fn inject_attacks(config: &SystemConfig, count: usize, duration: Time, seed: u64) -> AttackPlan {
    if config.sec_tasks.is_empty() || count == 0 || duration.0 < 2 {
        return AttackPlan::default();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attacks: Vec<Attack> = (0..count)
        .map(|_| {
            let time = Time(rng.gen_range(1..duration.0));
            let target = config.sec_tasks[rng.gen_range(0..config.sec_tasks.len())].id.clone();
            Attack { time, target }
        })
        .collect();
    attacks.sort_by(|a, b| a.time.cmp(&b.time).then_with(|| a.target.cmp(&b.target)));
    AttackPlan { attacks }
}

/// Which job of the targeted task detects an attack.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DetectionRule {
    /// The first job released at or after the attack.
    #[default]
    NextRelease,
    /// The first job completing after the attack, even if it started before.
    NextCompletion,
}

/// Detection latency of each attack: an attack at `t_a` on task `s` is
/// caught when the first job of `s` released at or after `t_a` completes.
pub fn detection_latency(trace: &SimTrace, plan: &AttackPlan) -> Detections {
    detection_latency_with(trace, plan, DetectionRule::NextRelease)
}

pub fn detection_latency_with(trace: &SimTrace, plan: &AttackPlan, rule: DetectionRule) -> Detections {
    detection_latency_in(&trace.events, plan, trace.duration, rule)
}

fn detection_latency_in(events: &[SimEvent], plan: &AttackPlan, duration: Time, rule: DetectionRule) -> Detections {
    let history = job_history(events);
    let mut cache: HashMap<&TaskId, (&Vec<Time>, &Vec<Time>)> = HashMap::new();
    let mut out = Detections::default();
    for attack in &plan.attacks {
        let entry = cache.entry(&attack.target).or_insert_with(|| {
            history
                .get(&attack.target)
                .map(|(r, c)| (r, c))
                .unwrap_or((&EMPTY, &EMPTY))
        });
        let (releases, completions) = *entry;
        let k = match rule {
            DetectionRule::NextRelease => releases.partition_point(|&r| r < attack.time),
            DetectionRule::NextCompletion => completions.partition_point(|&c| c <= attack.time),
        };
        match completions.get(k) {
            Some(&done) if k < releases.len() && done <= duration => out.samples.push(DetectionSample {
                attack_time: attack.time,
                detect_time: done,
                detecting_task: attack.target.clone(),
                latency: done - attack.time,
            }),
            _ => out.censored += 1,
        }
    }
    out
}

static EMPTY: Vec<Time> = Vec::new();

/// Fraction of samples at or below `x`.
pub fn empirical_cdf(samples: &[Time], x: Time) -> Result<Rational> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let hits = samples.iter().filter(|&&s| s <= x).count() as u64;
    Ok(ratio(hits, samples.len() as u64))
}

pub fn mean(samples: &[Time]) -> Result<Rational> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let sum: u64 = samples.iter().map(|s| s.0).sum();
    Ok(ratio(sum, samples.len() as u64))
}

/// How much faster, in percent of the baseline mean, `hydra` detects than
/// `single`. Negative when it is slower.
pub fn mean_detection_improvement(hydra: &[Time], single: &[Time]) -> Result<Rational> {
    let (h, s) = (mean(hydra)?, mean(single)?);
    if s == Rational::from_integer(0.into()) {
        return Ok(Rational::from_integer(0.into()));
    }
    Ok((&s - h) / s * int(100))
}

/// LCM of every task period, saturating at `cap`.
pub fn hyperperiod(config: &SystemConfig, alloc: &Allocation, cap: Time) -> Time {
    let mut lcm: u128 = 1;
    let periods = config
        .rt_tasks
        .iter()
        .map(|t| t.period)
        .chain(alloc.periods().values().copied());
    for p in periods {
        lcm = lcm.lcm(&(p.0 as u128));
        if lcm >= cap.0 as u128 {
            return cap;
        }
    }
    Time(lcm as u64)
}
