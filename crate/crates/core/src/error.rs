use thiserror::Error;

use crate::model::{TaskId, Time};

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown task `{0}`")]
    UnknownTask(TaskId),
    #[error("higher-priority security task `{0}` on the core has no fixed period")]
    PeriodNotFixed(TaskId),
    #[error("period {period} of `{task}` is outside its allowed range")]
    PeriodOutOfBounds { task: TaskId, period: Time },
    #[error("period {period} is shorter than the desired period {desired}")]
    PeriodBelowDesired { desired: Time, period: Time },
    #[error("security task `{0}` is not assigned to any core")]
    MissingAssignment(TaskId),
    #[error("core index {core} out of range for {cores} cores")]
    CoreOutOfRange { core: usize, cores: usize },
    #[error("search space of {required} assignments exceeds the limit of {limit}")]
    LimitExceeded { required: u128, limit: u128 },
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },
    #[error("no valid taskset after {attempts} draws: {last_reason}")]
    RedrawLimit { attempts: u32, last_reason: String },
    #[error("empirical CDF of an empty sample set")]
    EmptySamples,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
