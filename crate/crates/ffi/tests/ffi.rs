use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use secalloc_ffi::*;

const TASKSET: &str = r#"
cores = 2

[[rt_tasks]]
id = "a"
wcet_us = 2000
period_us = 10000
core = 0

[[rt_tasks]]
id = "b"
wcet_us = 9000
period_us = 10000
core = 1

[[sec_tasks]]
id = "s"
wcet_us = 1000
desired_period_us = 10000
max_period_us = 100000
"#;

fn config(text: &str) -> (SecallocStatus, *mut SecallocConfig) {
    let text = CString::new(text).unwrap();
    let mut out = ptr::null_mut();
    let status = unsafe { secalloc_config_from_toml(text.as_ptr(), &mut out) };
    (status, out)
}

fn last_error() -> String {
    let p = secalloc_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn hydra_places_task_on_lightly_loaded_core() {
    let (status, cfg) = config(TASKSET);
    assert_eq!(status, SecallocStatus::Ok);
    unsafe {
        assert_eq!(secalloc_config_core_count(cfg), 2);
        assert_eq!(secalloc_config_security_task_count(cfg), 1);
        assert_eq!(secalloc_config_validate(cfg), SecallocStatus::Ok);

        let mut alloc = ptr::null_mut();
        assert_eq!(
            secalloc_allocate(cfg, SecallocScheme::Hydra, 0, &mut alloc),
            SecallocStatus::Ok
        );
        assert!(secalloc_allocation_is_schedulable(alloc));
        assert_eq!(secalloc_allocation_objective(alloc), 1.0);
        assert!(secalloc_allocation_failing_task(alloc).is_null());

        let mut p = SecallocPlacement {
            id: ptr::null(),
            core: 9,
            period_us: 0,
            tightness: 0.0,
        };
        assert_eq!(secalloc_allocation_task(alloc, 0, &mut p), SecallocStatus::Ok);
        assert_eq!(CStr::from_ptr(p.id).to_str().unwrap(), "s");
        assert_eq!((p.core, p.period_us, p.tightness), (0, 10_000, 1.0));
        assert_eq!(secalloc_allocation_task(alloc, 1, &mut p), SecallocStatus::InvalidInput);

        let text = secalloc_allocation_to_toml(alloc);
        assert!(CStr::from_ptr(text).to_str().unwrap().contains("scheme = \"hydra\""));
        secalloc_string_free(text);
        secalloc_allocation_free(alloc);
        secalloc_config_free(cfg);
    }
}

#[test]
fn status_codes_match_cli_exit_codes() {
    let overloaded = TASKSET
        .replace("wcet_us = 1000", "wcet_us = 9500")
        .replace("max_period_us = 100000", "max_period_us = 10000");
    let (status, cfg) = config(&overloaded);
    assert_eq!(status, SecallocStatus::Ok);
    unsafe {
        let mut alloc = ptr::null_mut();
        assert_eq!(
            secalloc_allocate(cfg, SecallocScheme::Hydra, 0, &mut alloc),
            SecallocStatus::Unschedulable
        );
        assert!(!alloc.is_null());
        assert!(!secalloc_allocation_is_schedulable(alloc));
        assert_eq!(
            CStr::from_ptr(secalloc_allocation_failing_task(alloc))
                .to_str()
                .unwrap(),
            "s"
        );
        secalloc_allocation_free(alloc);

        let mut alloc = ptr::null_mut();
        assert_eq!(
            secalloc_allocate(cfg, SecallocScheme::Optimal, 1, &mut alloc),
            SecallocStatus::LimitExceeded
        );
        assert!(alloc.is_null());
        assert!(last_error().contains("exceed"), "{}", last_error());
        secalloc_config_free(cfg);
    }

    let (status, cfg) = config("cores = \"two\"");
    assert_eq!(status, SecallocStatus::InvalidInput);
    assert!(cfg.is_null());
    assert!(!last_error().is_empty());

    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { secalloc_config_from_toml(ptr::null(), &mut out) },
        SecallocStatus::NullPointer
    );
    assert_eq!(
        unsafe { secalloc_allocate(ptr::null(), SecallocScheme::Hydra, 0, &mut ptr::null_mut()) },
        SecallocStatus::NullPointer
    );
    assert_eq!(SecallocStatus::Unschedulable as i32, 1);
    assert_eq!(SecallocStatus::InvalidInput as i32, 2);
    assert_eq!(SecallocStatus::LimitExceeded as i32, 3);
}

#[test]
fn unpartitionable_taskset_reports_unschedulable() {
    let text = "cores = 1\n[[rt_tasks]]\nid = \"a\"\nwcet_us = 8\nperiod_us = 10\n[[rt_tasks]]\nid = \"b\"\nwcet_us = 8\nperiod_us = 10\n";
    let (status, cfg) = config(text);
    assert_eq!(status, SecallocStatus::Unschedulable);
    assert!(cfg.is_null());
    assert!(last_error().contains("partitioning"));
}

#[test]
fn scalar_helpers() {
    assert_eq!(secalloc_dbf(2, 5, 4), 0);
    assert_eq!(secalloc_dbf(2, 5, 5), 2);
    assert_eq!(secalloc_dbf(2, 5, 12), 4);
    assert_eq!(secalloc_dbf(2, 0, 12), 0);

    let samples = [1u64, 2, 3];
    let mut out = 0.0;
    let status = unsafe { secalloc_empirical_cdf(samples.as_ptr(), 3, 2, &mut out) };
    assert_eq!(status, SecallocStatus::Ok);
    assert!((out - 2.0 / 3.0).abs() < 1e-15);
    let status = unsafe { secalloc_empirical_cdf(ptr::null(), 0, 2, &mut out) };
    assert_eq!(status, SecallocStatus::InvalidInput);
}

fn target_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_against_static_library() {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libsecalloc_ffi.a");
    assert!(lib.exists(), "missing {}", lib.display());
    let out_dir = tempfile::tempdir().unwrap();
    let exe = out_dir.path().join("smoke");
    let status = Command::new("cc")
        .arg(manifest.join("tests/c/smoke.c"))
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("C compiler available");
    assert!(status.success());
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout), "ok\n");
}
