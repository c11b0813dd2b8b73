//! Allocation of periodic security-monitoring tasks onto the cores of a
//! partitioned fixed-priority multicore real-time system.
//!
//! Time is kept in integer microseconds and every analytical quantity is an
//! exact rational, so verdicts never depend on floating-point rounding.

pub mod alloc;
pub mod error;
pub mod experiment;
pub mod io;
pub mod model;
pub mod partition;
pub mod period;
pub mod schedulability;
pub mod sim;
pub mod taskgen;

pub use alloc::{
    delta_eta, exhaustive_optimal, hydra_allocate, single_core_allocate, verify_allocation, AllocationOutcome,
    Unschedulable,
};
pub use error::{Error, Result};
pub use model::{
    validate_config, Allocation, Platform, Rational, RealTimeTask, SecurityTask, SystemConfig, TaskId, Time, Violation,
};
pub use partition::{best_fit_partition, PartitionFailure};
pub use period::{optimize_period, PeriodSolution};
pub use schedulability::{dbf, interference, necessary_condition, security_schedulable, InterferenceBound};
pub use sim::{detection_latency, empirical_cdf, inject_attacks, simulate, AttackPlan, SimTrace};
pub use taskgen::{generate_taskset, GenParams};
