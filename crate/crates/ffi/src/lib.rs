//! C ABI over `secalloc`.
//!
//! Configs and allocations are opaque heap handles owned by the caller and
//! released with their `_free` function. Strings returned as `char *` must be
//! released with [`secalloc_string_free`]; `const char *` results are owned
//! by the handle they came from. When a call fails, a description is
//! available from [`secalloc_last_error`] on the same thread.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, size_t};
use num_traits::ToPrimitive;

use secalloc::alloc::{exhaustive_optimal, hydra_allocate, single_core_allocate};
use secalloc::io::{AllocationFile, TasksetFile};
use secalloc::model::{RealTimeTask, SystemConfig, Time};
use secalloc::{Error, Rational};

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecallocStatus {
    Ok = 0,
    Unschedulable = 1,
    InvalidInput = 2,
    LimitExceeded = 3,
    NullPointer = 4,
    Internal = 5,
}

impl From<&Error> for SecallocStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::LimitExceeded { .. } => SecallocStatus::LimitExceeded,
            Error::Io(_) => SecallocStatus::Internal,
            _ => SecallocStatus::InvalidInput,
        }
    }
}

fn fail(e: Error) -> SecallocStatus {
    let status = SecallocStatus::from(&e);
    set_error(e.to_string());
    status
}

fn guarded(f: impl FnOnce() -> SecallocStatus) -> SecallocStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => {
            set_error("internal panic");
            SecallocStatus::Internal
        }
    }
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SecallocScheme {
    Hydra = 0,
    SingleCore = 1,
    Optimal = 2,
}

impl SecallocScheme {
    fn name(self) -> &'static str {
        match self {
            SecallocScheme::Hydra => "hydra",
            SecallocScheme::SingleCore => "single-core",
            SecallocScheme::Optimal => "optimal",
        }
    }
}

/// A validated, partitioned system configuration.
pub struct SecallocConfig {
    inner: SystemConfig,
}

/// The result of one allocation run, schedulable or not.
pub struct SecallocAllocation {
    record: AllocationFile,
    ids: Vec<CString>,
    failing_task: Option<CString>,
    objective: f64,
}

/// One security task's placement. `id` is owned by the allocation handle.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct SecallocPlacement {
    pub id: *const c_char,
    pub core: size_t,
    pub period_us: u64,
    pub tightness: f64,
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, SecallocStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(SecallocStatus::NullPointer);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("string argument is not UTF-8");
        SecallocStatus::InvalidInput
    })
}

/// Parses a taskset document. Real-time tasks without a core are
/// partitioned; if that fails the status is `UNSCHEDULABLE`.
#[no_mangle]
pub unsafe extern "C" fn secalloc_config_from_toml(
    text: *const c_char,
    out: *mut *mut SecallocConfig,
) -> SecallocStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return SecallocStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let text = match str_arg(text) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let file = match TasksetFile::from_toml(text) {
            Ok(f) => f,
            Err(e) => return fail(e),
        };
        match file.into_config() {
            Ok(Ok(inner)) => {
                *out = Box::into_raw(Box::new(SecallocConfig { inner }));
                SecallocStatus::Ok
            }
            Ok(Err(id)) => {
                set_error(format!("real-time partitioning failed at `{id}`"));
                SecallocStatus::Unschedulable
            }
            Err(e) => fail(e),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_config_free(config: *mut SecallocConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_config_core_count(config: *const SecallocConfig) -> size_t {
    config.as_ref().map_or(0, |c| c.inner.core_count())
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_config_security_task_count(config: *const SecallocConfig) -> size_t {
    config.as_ref().map_or(0, |c| c.inner.sec_tasks.len())
}

/// `OK` when the config satisfies every model invariant, else
/// `INVALID_INPUT` with the violations in the last error.
#[no_mangle]
pub unsafe extern "C" fn secalloc_config_validate(config: *const SecallocConfig) -> SecallocStatus {
    guarded(|| {
        let Some(config) = config.as_ref() else {
            set_error("null config");
            return SecallocStatus::NullPointer;
        };
        let violations = secalloc::validate_config(&config.inner);
        if violations.is_empty() {
            return SecallocStatus::Ok;
        }
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        set_error(list.join("; "));
        SecallocStatus::InvalidInput
    })
}

/// Runs `scheme` on `config`. On `OK` and `UNSCHEDULABLE` a new allocation
/// handle is stored in `out`. `max_assignments` only applies to `OPTIMAL`.
#[no_mangle]
pub unsafe extern "C" fn secalloc_allocate(
    config: *const SecallocConfig,
    scheme: SecallocScheme,
    max_assignments: u64,
    out: *mut *mut SecallocAllocation,
) -> SecallocStatus {
    guarded(|| {
        if out.is_null() {
            set_error("null output pointer");
            return SecallocStatus::NullPointer;
        }
        *out = ptr::null_mut();
        let Some(config) = config.as_ref() else {
            set_error("null config");
            return SecallocStatus::NullPointer;
        };
        let config = &config.inner;
        let outcome = match scheme {
            SecallocScheme::Hydra => hydra_allocate(config),
            SecallocScheme::SingleCore => single_core_allocate(config),
            SecallocScheme::Optimal => exhaustive_optimal(config, max_assignments as u128),
        };
        let outcome = match outcome {
            Ok(o) => o,
            Err(e) => return fail(e),
        };
        let record = AllocationFile::from_outcome(scheme.name(), config, &outcome);
        let to_c = |s: &str| CString::new(s).unwrap_or_default();
        let handle = SecallocAllocation {
            ids: record.tasks.iter().map(|t| to_c(&t.id)).collect(),
            failing_task: record.failing_task.as_deref().map(to_c),
            objective: outcome.objective.to_f64().unwrap_or(f64::NAN),
            record,
        };
        let status = match &outcome.result {
            Ok(_) => SecallocStatus::Ok,
            Err(reason) => {
                set_error(reason.to_string());
                SecallocStatus::Unschedulable
            }
        };
        *out = Box::into_raw(Box::new(handle));
        status
    })
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_free(alloc: *mut SecallocAllocation) {
    if !alloc.is_null() {
        drop(Box::from_raw(alloc));
    }
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_is_schedulable(alloc: *const SecallocAllocation) -> bool {
    alloc.as_ref().is_some_and(|a| a.record.is_schedulable())
}

/// Weighted cumulative tightness, or NaN for a null handle.
#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_objective(alloc: *const SecallocAllocation) -> f64 {
    alloc.as_ref().map_or(f64::NAN, |a| a.objective)
}

/// Id of the task the allocator could not place, or NULL.
#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_failing_task(alloc: *const SecallocAllocation) -> *const c_char {
    alloc
        .as_ref()
        .and_then(|a| a.failing_task.as_ref())
        .map_or(ptr::null(), |s| s.as_ptr())
}

/// Number of placed security tasks, in security-priority order.
#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_task_count(alloc: *const SecallocAllocation) -> size_t {
    alloc.as_ref().map_or(0, |a| a.record.tasks.len())
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_task(
    alloc: *const SecallocAllocation,
    index: size_t,
    out: *mut SecallocPlacement,
) -> SecallocStatus {
    guarded(|| {
        let (Some(alloc), false) = (alloc.as_ref(), out.is_null()) else {
            set_error("null argument");
            return SecallocStatus::NullPointer;
        };
        let Some(task) = alloc.record.tasks.get(index) else {
            set_error(format!("task index {index} out of range"));
            return SecallocStatus::InvalidInput;
        };
        let tightness = secalloc::io::parse_rational(&task.tightness_exact)
            .ok()
            .and_then(|r: Rational| r.to_f64())
            .unwrap_or(f64::NAN);
        *out = SecallocPlacement {
            id: alloc.ids[index].as_ptr(),
            core: task.core,
            period_us: task.period_us,
            tightness,
        };
        SecallocStatus::Ok
    })
}

/// The allocation as a TOML document; free with [`secalloc_string_free`].
#[no_mangle]
pub unsafe extern "C" fn secalloc_allocation_to_toml(alloc: *const SecallocAllocation) -> *mut c_char {
    let Some(alloc) = alloc.as_ref() else {
        set_error("null allocation");
        return ptr::null_mut();
    };
    match alloc.record.to_toml() {
        Ok(text) => CString::new(text).map_or(ptr::null_mut(), CString::into_raw),
        Err(e) => {
            set_error(e.to_string());
            ptr::null_mut()
        }
    }
}

#[no_mangle]
pub unsafe extern "C" fn secalloc_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn secalloc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Demand bound of an implicit-deadline task over an interval of `t_us`.
/// Returns 0 for a zero period.
#[no_mangle]
pub extern "C" fn secalloc_dbf(wcet_us: u64, period_us: u64, t_us: u64) -> u64 {
    if period_us == 0 {
        return 0;
    }
    secalloc::dbf(&RealTimeTask::new("t", Time(wcet_us), Time(period_us)), Time(t_us)).0
}

/// Fraction of the `len` samples at or below `x_us`.
#[no_mangle]
pub unsafe extern "C" fn secalloc_empirical_cdf(
    samples_us: *const u64,
    len: size_t,
    x_us: u64,
    out: *mut f64,
) -> SecallocStatus {
    guarded(|| {
        if out.is_null() || (samples_us.is_null() && len > 0) {
            set_error("null argument");
            return SecallocStatus::NullPointer;
        }
        let samples: Vec<Time> = if len == 0 {
            Vec::new()
        } else {
            std::slice::from_raw_parts(samples_us, len)
                .iter()
                .map(|&v| Time(v))
                .collect()
        };
        match secalloc::empirical_cdf(&samples, Time(x_us)) {
            Ok(r) => {
                *out = r.to_f64().unwrap_or(f64::NAN);
                SecallocStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}
