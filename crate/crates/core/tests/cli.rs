use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use secalloc::generate_taskset;
use secalloc::io::{parse_rational, AllocationFile, TasksetFile};
use secalloc::taskgen::{sweep_params, GenParams};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_secalloc"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn generate(dir: &Path, params: &str) -> Output {
    let file = dir.join("params.toml");
    fs::write(&file, params).unwrap();
    run(bin()
        .args(["generate", "--params"])
        .arg(&file)
        .arg("--out")
        .arg(dir.join("sets")))
}

#[test]
fn generate_is_reproducible_and_round_trips() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let params = "cores = 2\nreplications = 2\nmaster_seed = 7\n";
    assert!(generate(a.path(), params).status.success());
    assert!(generate(b.path(), params).status.success());

    let manifest = fs::read_to_string(a.path().join("sets/manifest.toml")).unwrap();
    assert_eq!(
        manifest,
        fs::read_to_string(b.path().join("sets/manifest.toml")).unwrap()
    );
    assert_eq!(manifest.matches("[[configs]]").count(), 78);

    let name = "taskset_p10_r001.toml";
    let bytes = fs::read(a.path().join("sets").join(name)).unwrap();
    assert_eq!(bytes, fs::read(b.path().join("sets").join(name)).unwrap());

    let item = sweep_params(2, 2, 7)
        .into_iter()
        .find(|i| i.point == 10 && i.replication == 1)
        .unwrap();
    let expected = generate_taskset(&item.params).unwrap();
    let parsed = TasksetFile::from_toml(std::str::from_utf8(&bytes).unwrap())
        .unwrap()
        .into_config()
        .unwrap()
        .unwrap();
    assert_eq!(parsed, expected);
}

#[test]
fn bad_range_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate(dir.path(), "cores = 2\nreplications = 1\nrt_period_us = [5000, 1000]\n");
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("rt_period_us"));
}

fn write_taskset(dir: &Path, seed: u64, util: (u64, u64)) -> std::path::PathBuf {
    let util = num_rational::BigRational::new(util.0.into(), util.1.into());
    let params = GenParams {
        sec_count: (2, 4),
        ..GenParams::new(2, util, seed)
    };
    let config = generate_taskset(&params).unwrap();
    let path = dir.join(format!("set{seed}.toml"));
    fs::write(&path, TasksetFile::from_config(&config).to_toml().unwrap()).unwrap();
    path
}

fn allocate(taskset: &Path, scheme: &str, extra: &[&str]) -> (Output, Option<AllocationFile>) {
    let out = run(bin()
        .arg("allocate")
        .arg(taskset)
        .args(["--scheme", scheme])
        .args(extra));
    let record = AllocationFile::from_toml(&String::from_utf8_lossy(&out.stdout)).ok();
    (out, record)
}

#[test]
fn optimal_dominates_hydra_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let taskset = write_taskset(dir.path(), 3, (3, 2));
    let (h_out, hydra) = allocate(&taskset, "hydra", &[]);
    let (o_out, optimal) = allocate(&taskset, "optimal", &[]);
    assert!(h_out.status.success() && o_out.status.success());
    let (hydra, optimal) = (hydra.unwrap(), optimal.unwrap());
    assert!(hydra.is_schedulable());
    let h = parse_rational(&hydra.objective_exact).unwrap();
    let o = parse_rational(&optimal.objective_exact).unwrap();
    assert!(h > num_rational::BigRational::from_integer(0.into()));
    assert!(o >= h);
}

#[test]
fn exit_codes_distinguish_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let overloaded = dir.path().join("overloaded.toml");
    fs::write(
        &overloaded,
        r#"cores = 1

[[rt_tasks]]
id = "a"
wcet_us = 9000
period_us = 10000
core = 0

[[sec_tasks]]
id = "s"
wcet_us = 5000
desired_period_us = 10000
max_period_us = 20000
"#,
    )
    .unwrap();
    let (out, record) = allocate(&overloaded, "hydra", &[]);
    assert_eq!(out.status.code(), Some(1));
    let record = record.unwrap();
    assert_eq!(record.status, "unschedulable");
    assert_eq!(record.failing_task.as_deref(), Some("s"));

    let taskset = write_taskset(dir.path(), 5, (1, 2));
    let (out, _) = allocate(&taskset, "optimal", &["--limit", "1"]);
    assert_eq!(out.status.code(), Some(3));

    let broken = dir.path().join("broken.toml");
    fs::write(&broken, "cores = \"two\"\n").unwrap();
    let (out, _) = allocate(&broken, "hydra", &[]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_is_seeded_and_handles_no_attacks() {
    let dir = tempfile::tempdir().unwrap();
    let taskset = write_taskset(dir.path(), 11, (1, 1));
    let alloc = dir.path().join("alloc.toml");
    let (out, _) = allocate(&taskset, "hydra", &["--out", alloc.to_str().unwrap()]);
    assert!(out.status.success());

    let sim = |name: &str, attacks: &str| {
        let out = run(bin()
            .arg("simulate")
            .arg(&taskset)
            .arg(&alloc)
            .args(["--duration-s", "20", "--attacks", attacks, "--seed", "3", "--out"])
            .arg(dir.path().join(name)));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read_to_string(dir.path().join(name).join("detections.csv")).unwrap()
    };
    let first = sim("a", "40");
    assert_eq!(first, sim("b", "40"));
    assert!(first.lines().count() > 1);
    let summary = fs::read_to_string(dir.path().join("a/summary.toml")).unwrap();
    assert!(summary.contains("deadline_misses = 0"));
    assert!(summary.contains("[[cdf]]"));

    assert_eq!(sim("none", "0"), "attack_time_us,detect_time_us,latency_us,task\n");
    let summary = fs::read_to_string(dir.path().join("none/summary.toml")).unwrap();
    assert!(summary.contains("no detection samples"));
}

#[test]
fn experiment_output_ignores_worker_count() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = |workers: &str, name: &str| {
        let out = run(bin()
            .env("SECALLOC_WORKERS", workers)
            .args([
                "experiment",
                "schedulability-sweep",
                "--cores",
                "2",
                "--replications",
                "2",
                "--out",
            ])
            .arg(dir.path().join(name)));
        assert!(out.status.success());
        fs::read_to_string(dir.path().join(name).join("acceptance_ratios.csv")).unwrap()
    };
    let one = sweep("1", "one");
    assert_eq!(one, sweep("3", "three"));
    assert!(one.starts_with("cores,point,utilization,scheme,total,generated,accepted,acceptance_ratio\n"));
    assert_eq!(one.lines().count(), 1 + 39 * 2);
}

#[test]
fn completion_rule_never_detects_later() {
    let dir = tempfile::tempdir().unwrap();
    let taskset = write_taskset(dir.path(), 13, (1, 1));
    let alloc = dir.path().join("alloc.toml");
    let (out, _) = allocate(&taskset, "hydra", &["--out", alloc.to_str().unwrap()]);
    assert!(out.status.success());

    let latencies = |rule: &str| {
        let name = format!("sim_{rule}");
        let out = run(bin()
            .arg("simulate")
            .arg(&taskset)
            .arg(&alloc)
            .args(["--duration-s", "10", "--attacks", "30", "--detection", rule, "--out"])
            .arg(dir.path().join(&name)));
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let summary = fs::read_to_string(dir.path().join(&name).join("summary.toml")).unwrap();
        assert!(summary.contains(&format!("detection = \"{}\"", rule.replace('-', "_"))));
        let csv = fs::read_to_string(dir.path().join(&name).join("detections.csv")).unwrap();
        csv.lines()
            .skip(1)
            .map(|l| {
                (
                    l.split(',').next().unwrap().to_string(),
                    l.split(',').nth(2).unwrap().parse::<u64>().unwrap(),
                )
            })
            .collect::<Vec<_>>()
    };
    let release = latencies("next-release");
    let completion = latencies("next-completion");
    assert!(!release.is_empty());
    for (attack, late) in &release {
        if let Some((_, early)) = completion.iter().find(|(a, _)| a == attack) {
            assert!(early <= late);
        }
    }
}
