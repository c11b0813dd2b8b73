//! TOML schemas for tasksets and allocations, plus number rendering shared
//! by every CSV writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::alloc::{AllocationOutcome, Unschedulable};
use crate::error::{Error, Result};
use crate::model::{Allocation, Platform, Rational, RealTimeTask, SecurityTask, SystemConfig, TaskId, Time};
use crate::partition::best_fit_partition;
use crate::sim::{DetectionSample, EventKind, SimTrace};

/// Significant digits used when rendering rationals as decimals.
pub const DECIMAL_DIGITS: usize = 15;

/// Renders `value` in fixed decimal notation with at least `sig` significant
/// digits, rounding half away from zero.
pub fn decimal(value: &Rational, sig: usize) -> String {
    if value.is_zero() {
        return "0".into();
    }
    let abs = value.abs();
    let int_part = abs.trunc().to_integer();
    let frac_digits = if int_part.is_zero() {
        let mut leading = 0usize;
        let mut x = abs.clone();
        let tenth = Rational::new(BigInt::from(1), BigInt::from(10));
        while x < tenth {
            x *= BigInt::from(10);
            leading += 1;
        }
        sig + leading
    } else {
        sig.saturating_sub(int_part.to_string().len()).max(1)
    };
    let scale = BigInt::from(10).pow(frac_digits as u32);
    let scaled = (abs * Rational::from_integer(scale)).round().to_integer();
    let digits = format!("{:0>width$}", scaled.to_string(), width = frac_digits + 1);
    let (int_s, frac_s) = digits.split_at(digits.len() - frac_digits);
    let sign = if value.is_negative() { "-" } else { "" };
    format!("{sign}{int_s}.{frac_s}")
}

/// `p/q`, or `p` for integers.
pub fn exact(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Parses `p/q`, an integer, or a plain decimal such as `1.25`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: `{s}`"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((i, f)) = s.split_once('.') {
        let neg = i.starts_with('-');
        let digits = format!("{}{}", i.trim_start_matches('-'), f);
        let n: BigInt = digits.parse().map_err(|_| bad())?;
        let r = Rational::new(n, BigInt::from(10).pow(f.len() as u32));
        return Ok(if neg { -r } else { r });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(Rational::from_integer(n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Int(u64),
    Text(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RtTaskEntry {
    pub id: String,
    pub wcet_us: u64,
    pub period_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub core: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecTaskEntry {
    pub id: String,
    pub wcet_us: u64,
    pub desired_period_us: u64,
    pub max_period_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<Weight>,
}

/// On-disk taskset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TasksetFile {
    pub cores: usize,
    #[serde(default)]
    pub rt_tasks: Vec<RtTaskEntry>,
    #[serde(default)]
    pub sec_tasks: Vec<SecTaskEntry>,
}

impl TasksetFile {
    pub fn from_config(config: &SystemConfig) -> Self {
        TasksetFile {
            cores: config.core_count(),
            rt_tasks: config
                .rt_tasks
                .iter()
                .map(|t| RtTaskEntry {
                    id: t.id.0.clone(),
                    wcet_us: t.wcet.0,
                    period_us: t.period.0,
                    core: config.platform.core_of(&t.id),
                })
                .collect(),
            sec_tasks: config
                .sec_tasks
                .iter()
                .map(|t| SecTaskEntry {
                    id: t.id.0.clone(),
                    wcet_us: t.wcet.0,
                    desired_period_us: t.desired_period.0,
                    max_period_us: t.max_period.0,
                    weight: weight_entry(&t.weight),
                })
                .collect(),
        }
    }

    /// True when some real-time task has no core.
    pub fn needs_partition(&self) -> bool {
        self.rt_tasks.iter().any(|t| t.core.is_none())
    }

    /// Builds the config, running best-fit partitioning when any real-time
    /// task lacks a core. The outer error is a malformed file; the inner one
    /// names the task the partitioner could not place.
    pub fn into_config(self) -> Result<std::result::Result<SystemConfig, TaskId>> {
        let needs_partition = self.needs_partition();
        let mut platform = Platform::new(self.cores);
        let mut rt = Vec::with_capacity(self.rt_tasks.len());
        for e in &self.rt_tasks {
            if let (false, Some(core)) = (needs_partition, e.core) {
                platform.rt_partition.insert(TaskId::new(&e.id), core);
            }
            rt.push(RealTimeTask::new(e.id.clone(), Time(e.wcet_us), Time(e.period_us)));
        }
        let mut sec = Vec::with_capacity(self.sec_tasks.len());
        for e in &self.sec_tasks {
            let mut task = SecurityTask::new(
                e.id.clone(),
                Time(e.wcet_us),
                Time(e.desired_period_us),
                Time(e.max_period_us),
            );
            match &e.weight {
                Some(Weight::Int(w)) => task.weight = Rational::from_integer(BigInt::from(*w)),
                Some(Weight::Text(s)) => task.weight = parse_rational(s)?,
                None => {}
            }
            sec.push(task);
        }
        let mut config = SystemConfig::new(platform, rt, sec);
        if needs_partition {
            match best_fit_partition(&config.rt_tasks, self.cores) {
                Ok(p) => config.platform = p,
                Err(fail) => return Ok(Err(fail.0)),
            }
        }
        Ok(Ok(config))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }
}

fn weight_entry(w: &Rational) -> Option<Weight> {
    if w == &Rational::from_integer(BigInt::from(1)) {
        None
    } else if w.is_integer() && !w.is_negative() {
        w.numer().to_string().parse().ok().map(Weight::Int)
    } else {
        Some(Weight::Text(exact(w)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionEntry {
    pub id: String,
    pub core: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocatedTask {
    pub id: String,
    pub core: usize,
    pub period_us: u64,
    pub tightness: String,
    pub tightness_exact: String,
}

/// On-disk allocation or unschedulable verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AllocationFile {
    pub scheme: String,
    /// `schedulable` or `unschedulable`.
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failing_task: Option<String>,
    pub objective: String,
    pub objective_exact: String,
    /// Set when every security task used the default weight of 1.
    pub default_weights: bool,
    #[serde(default)]
    pub rt_partition: Vec<PartitionEntry>,
    #[serde(default)]
    pub tasks: Vec<AllocatedTask>,
}

impl AllocationFile {
    pub fn from_outcome(scheme: &str, config: &SystemConfig, outcome: &AllocationOutcome) -> Self {
        let rt_partition = outcome
            .platform
            .rt_partition
            .iter()
            .map(|(id, &core)| PartitionEntry { id: id.0.clone(), core })
            .collect();
        let (status, reason, failing_task, tasks) = match &outcome.result {
            Ok(alloc) => {
                let tasks = config
                    .sec_by_priority()
                    .into_iter()
                    .filter_map(|t| {
                        let eta = alloc.tightness_of(&t.id)?;
                        Some(AllocatedTask {
                            id: t.id.0.clone(),
                            core: alloc.core_of(&t.id)?,
                            period_us: alloc.period_of(&t.id)?.0,
                            tightness: decimal(eta, DECIMAL_DIGITS),
                            tightness_exact: exact(eta),
                        })
                    })
                    .collect();
                ("schedulable", None, None, tasks)
            }
            Err(Unschedulable::Task(id)) => (
                "unschedulable",
                Some("security_task_infeasible".to_string()),
                Some(id.0.clone()),
                Vec::new(),
            ),
            Err(Unschedulable::RtPartitionFailed(id)) => (
                "unschedulable",
                Some("rt_partition_failed".to_string()),
                Some(id.0.clone()),
                Vec::new(),
            ),
        };
        AllocationFile {
            scheme: scheme.to_string(),
            status: status.to_string(),
            reason,
            failing_task,
            objective: decimal(&outcome.objective, DECIMAL_DIGITS),
            objective_exact: exact(&outcome.objective),
            default_weights: config.unit_weights(),
            rt_partition,
            tasks,
        }
    }

    pub fn is_schedulable(&self) -> bool {
        self.status == "schedulable"
    }

    /// Applies this allocation to `config`: returns the config with the
    /// recorded real-time partition and the security allocation.
    pub fn apply(&self, config: &SystemConfig) -> Result<(SystemConfig, Allocation)> {
        if !self.is_schedulable() {
            return Err(Error::InvalidConfig(
                "allocation file records an unschedulable verdict".into(),
            ));
        }
        let mut platform = Platform::new(config.core_count());
        for e in &self.rt_partition {
            let id = TaskId::new(&e.id);
            if !config.rt_tasks.iter().any(|t| t.id == id) {
                return Err(Error::UnknownTask(id));
            }
            platform.rt_partition.insert(id, e.core);
        }
        let config = SystemConfig {
            platform,
            ..config.clone()
        };
        let mut alloc = Allocation::new();
        for e in &self.tasks {
            let id = TaskId::new(&e.id);
            let task = config.sec_task(&id).ok_or_else(|| Error::UnknownTask(id.clone()))?;
            if e.core >= config.core_count() {
                return Err(Error::CoreOutOfRange {
                    core: e.core,
                    cores: config.core_count(),
                });
            }
            alloc.place(task, e.core, Time(e.period_us))?;
        }
        if !alloc.is_complete_for(&config) {
            return Err(Error::InvalidConfig(
                "allocation does not cover every security task".into(),
            ));
        }
        Ok((config, alloc))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Writes `rows` as CSV with a header line.
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Like [`write_csv`], but emits `header` even when there are no rows.
pub fn write_csv_with_header<W: Write, T: Serialize>(
    out: W,
    header: &[&str],
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TraceRow<'a> {
    time_us: u64,
    kind: EventKind,
    task: &'a str,
    core: usize,
}

pub const TRACE_HEADER: [&str; 4] = ["time_us", "kind", "task", "core"];

pub fn write_trace<W: Write>(out: W, trace: &SimTrace) -> Result<()> {
    write_csv_with_header(
        out,
        &TRACE_HEADER,
        trace.events.iter().map(|e| TraceRow {
            time_us: e.time.0,
            kind: e.kind,
            task: e.task.as_str(),
            core: e.core,
        }),
    )
}

#[derive(Serialize)]
struct DetectionRow<'a> {
    attack_time_us: u64,
    detect_time_us: u64,
    latency_us: u64,
    task: &'a str,
}

pub const DETECTION_HEADER: [&str; 4] = ["attack_time_us", "detect_time_us", "latency_us", "task"];

pub fn write_detections<W: Write>(out: W, samples: &[DetectionSample]) -> Result<()> {
    write_csv_with_header(
        out,
        &DETECTION_HEADER,
        samples.iter().map(|s| DetectionRow {
            attack_time_us: s.attack_time.0,
            detect_time_us: s.detect_time.0,
            latency_us: s.latency.0,
            task: s.detecting_task.as_str(),
        }),
    )
}
