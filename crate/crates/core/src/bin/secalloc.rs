use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use secalloc::alloc::{exhaustive_optimal, hydra_allocate, single_core_allocate, AllocationOutcome, Unschedulable};
use secalloc::experiment::{
    acceptance_ratios, acceptance_rows, appendix_compare, detection_cdf, detection_sample_rows, improvement_rows,
    schedulability_sweep, with_workers, AppendixCsvRow, AppendixParams, DetectionParams, DetectionSummaryCsvRow,
    SweepParams,
};
use secalloc::io::{
    decimal, exact, parse_rational, write_csv, write_detections, write_trace, AllocationFile, TasksetFile,
    DECIMAL_DIGITS,
};
use secalloc::model::{validate_config, Platform, Rational, SystemConfig, Time};
use secalloc::sim::{detection_latency_with, empirical_cdf, inject_attacks, mean, simulate, DetectionRule};
use secalloc::taskgen::{generate_taskset, sweep_with, PeriodDist, SWEEP_POINTS};
use secalloc::Error;

#[derive(Parser)]
#[command(
    name = "secalloc",
    version,
    about = "Allocate security-monitoring tasks on partitioned multicore real-time systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a utilization sweep of tasksets.
    Generate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Allocate the security tasks of a taskset.
    Allocate {
        taskset: PathBuf,
        #[arg(long, value_enum, default_value_t = Scheme::Hydra)]
        scheme: Scheme,
        /// Largest number of assignments the optimal search may enumerate.
        #[arg(long, default_value_t = 1 << 20)]
        limit: u128,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate an allocation under injected attacks.
    Simulate {
        taskset: PathBuf,
        allocation: PathBuf,
        #[arg(long, default_value_t = 500)]
        duration_s: u64,
        #[arg(long, default_value_t = 100)]
        attacks: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Number of evenly spaced latency values at which to report the CDF.
        #[arg(long, default_value_t = 20)]
        cdf_points: u64,
        /// Also write the full event trace.
        #[arg(long)]
        trace: bool,
        /// Which job of the attacked task detects the attack.
        #[arg(long, value_enum, default_value_t = Detection::NextRelease)]
        detection: Detection,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a batch experiment.
    Experiment {
        #[arg(value_enum)]
        kind: ExperimentKind,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 25)]
        replications: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Core counts (detection-cdf and schedulability-sweep).
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 4, 8])]
        cores: Vec<usize>,
        #[arg(long, default_value_t = 50)]
        duration_s: u64,
        #[arg(long, default_value_t = 100)]
        attacks: usize,
        #[arg(long, default_value_t = 1 << 20)]
        limit: u128,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Scheme {
    Hydra,
    SingleCore,
    Optimal,
}

impl Scheme {
    fn name(self) -> &'static str {
        match self {
            Scheme::Hydra => "hydra",
            Scheme::SingleCore => "single-core",
            Scheme::Optimal => "optimal",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Detection {
    NextRelease,
    NextCompletion,
}

impl From<Detection> for DetectionRule {
    fn from(d: Detection) -> Self {
        match d {
            Detection::NextRelease => DetectionRule::NextRelease,
            Detection::NextCompletion => DetectionRule::NextCompletion,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ExperimentKind {
    AppendixCompare,
    DetectionCdf,
    SchedulabilitySweep,
}

enum Failure {
    Unschedulable,
    Input(Error),
    Limit(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::LimitExceeded { .. } => Failure::Limit(e),
            e => Failure::Input(e),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate { params, out } => cmd_generate(&params, &out),
        Command::Allocate {
            taskset,
            scheme,
            limit,
            out,
        } => cmd_allocate(&taskset, scheme, limit, out.as_deref()),
        Command::Simulate {
            taskset,
            allocation,
            duration_s,
            attacks,
            seed,
            cdf_points,
            trace,
            detection,
            out,
        } => cmd_simulate(
            &taskset,
            &allocation,
            duration_s,
            attacks,
            seed,
            cdf_points,
            trace,
            detection,
            &out,
        ),
        Command::Experiment {
            kind,
            out,
            replications,
            seed,
            cores,
            duration_s,
            attacks,
            limit,
        } => cmd_experiment(kind, &out, replications, seed, cores, duration_s, attacks, limit),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Unschedulable) => ExitCode::from(1),
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Limit(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}

/// Sweep parameter file. Omitted fields take the generator defaults for
/// `cores`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenerateFile {
    cores: usize,
    #[serde(default = "default_replications")]
    replications: usize,
    #[serde(default = "default_seed")]
    master_seed: u64,
    rt_count: Option<(usize, usize)>,
    sec_count: Option<(usize, usize)>,
    rt_period_us: Option<(u64, u64)>,
    sec_des_period_us: Option<(u64, u64)>,
    sec_max_period_factor: Option<u64>,
    sec_util_fraction: Option<String>,
    period_dist: Option<PeriodDist>,
    redraw_limit: Option<u32>,
}

fn default_replications() -> usize {
    250
}

fn default_seed() -> u64 {
    1
}

#[derive(Serialize)]
struct ManifestEntry {
    point: usize,
    utilization: String,
    replication: usize,
    seed: u64,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
}

#[derive(Serialize)]
struct Manifest {
    cores: usize,
    replications: usize,
    master_seed: u64,
    configs: Vec<ManifestEntry>,
}

fn cmd_generate(params: &Path, out: &Path) -> CmdResult {
    let spec: GenerateFile =
        toml::from_str(&fs::read_to_string(params)?).map_err(|e| Error::Parse(format!("{}: {e}", params.display())))?;
    if spec.cores == 0 {
        return Err(Error::InvalidParam {
            field: "cores",
            reason: "must be positive".into(),
        }
        .into());
    }
    let fraction = spec.sec_util_fraction.as_deref().map(parse_rational).transpose()?;
    let items = sweep_with(spec.cores, spec.replications, spec.master_seed, |mut g| {
        g.rt_count = spec.rt_count.unwrap_or(g.rt_count);
        g.sec_count = spec.sec_count.unwrap_or(g.sec_count);
        g.rt_period_us = spec.rt_period_us.unwrap_or(g.rt_period_us);
        g.sec_des_period_us = spec.sec_des_period_us.unwrap_or(g.sec_des_period_us);
        g.sec_max_period_factor = spec.sec_max_period_factor.unwrap_or(g.sec_max_period_factor);
        g.sec_util_fraction = fraction.clone().unwrap_or(g.sec_util_fraction);
        g.period_dist = spec.period_dist.unwrap_or(g.period_dist);
        g.redraw_limit = spec.redraw_limit.unwrap_or(g.redraw_limit);
        g
    });
    for item in &items {
        item.params.validate()?;
    }
    fs::create_dir_all(out)?;
    let generated = with_workers(|| {
        use rayon::prelude::*;
        items
            .par_iter()
            .map(|item| generate_taskset(&item.params))
            .collect::<Vec<_>>()
    })?;
    let mut configs = Vec::with_capacity(items.len());
    for (item, result) in items.iter().zip(generated) {
        let mut entry = ManifestEntry {
            point: item.point,
            utilization: decimal(&item.params.total_rt_util, DECIMAL_DIGITS),
            replication: item.replication,
            seed: item.params.seed,
            status: "ok".into(),
            file: None,
        };
        match result {
            Ok(config) => {
                let name = format!("taskset_p{:02}_r{:03}.toml", item.point, item.replication);
                fs::write(out.join(&name), TasksetFile::from_config(&config).to_toml()?)?;
                entry.file = Some(name);
            }
            Err(e) => {
                log::info!("point {} replication {}: {e}", item.point, item.replication);
                entry.status = "generation_failed".into();
            }
        }
        configs.push(entry);
    }
    let failed = configs.iter().filter(|c| c.file.is_none()).count();
    let manifest = Manifest {
        cores: spec.cores,
        replications: spec.replications,
        master_seed: spec.master_seed,
        configs,
    };
    fs::write(
        out.join("manifest.toml"),
        toml::to_string(&manifest).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    eprintln!(
        "wrote {} tasksets ({} points x {} replications, {failed} generation failures)",
        items.len() - failed,
        SWEEP_POINTS,
        spec.replications
    );
    Ok(())
}

/// Loads and validates a taskset. An unpartitionable real-time set is
/// returned as the core count and the failing task id.
fn load_taskset(path: &Path) -> Result<Result<SystemConfig, (usize, secalloc::TaskId)>, Failure> {
    let file = TasksetFile::read(path)?;
    let cores = file.cores;
    if cores == 0 {
        return Err(Error::InvalidConfig("`cores` must be positive".into()).into());
    }
    let config = match file.into_config()? {
        Ok(c) => c,
        Err(id) => return Ok(Err((cores, id))),
    };
    let violations = validate_config(&config);
    if !violations.is_empty() {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidConfig(list.join("; ")).into());
    }
    Ok(Ok(config))
}

fn write_output(out: Option<&Path>, text: &str) -> io::Result<()> {
    match out {
        Some(path) => fs::write(path, text),
        None => io::stdout().write_all(text.as_bytes()),
    }
}

fn cmd_allocate(taskset: &Path, scheme: Scheme, limit: u128, out: Option<&Path>) -> CmdResult {
    let (config, outcome) = match load_taskset(taskset)? {
        Ok(config) => {
            let outcome = match scheme {
                Scheme::Hydra => hydra_allocate(&config)?,
                Scheme::SingleCore => single_core_allocate(&config)?,
                Scheme::Optimal => exhaustive_optimal(&config, limit)?,
            };
            (config, outcome)
        }
        Err((cores, id)) => {
            let config = SystemConfig::new(Platform::new(cores), Vec::new(), Vec::new());
            let outcome = AllocationOutcome {
                result: Err(Unschedulable::RtPartitionFailed(id)),
                objective: Rational::from_integer(0.into()),
                per_core_security_util: vec![Rational::from_integer(0.into()); cores],
                platform: Platform::new(cores),
            };
            (config, outcome)
        }
    };
    let record = AllocationFile::from_outcome(scheme.name(), &config, &outcome);
    write_output(out, &record.to_toml()?)?;
    match &outcome.result {
        Ok(_) => Ok(()),
        Err(reason) => {
            eprintln!("unschedulable: {reason}");
            Err(Failure::Unschedulable)
        }
    }
}

#[derive(Serialize)]
struct CdfPoint {
    latency_us: u64,
    fraction: String,
}

#[derive(Serialize)]
struct SimSummary {
    duration_us: u64,
    attacks: usize,
    seed: u64,
    detection: &'static str,
    samples: usize,
    censored: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_latency_us: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    mean_latency_exact: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    note: Option<String>,
    deadline_misses: u64,
    cdf: Vec<CdfPoint>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    taskset: &Path,
    allocation: &Path,
    duration_s: u64,
    attacks: usize,
    seed: u64,
    cdf_points: u64,
    trace: bool,
    detection: Detection,
    out: &Path,
) -> CmdResult {
    let config = match load_taskset(taskset)? {
        Ok(c) => c,
        Err((_, id)) => {
            return Err(
                Error::InvalidConfig(format!("real-time tasks cannot be partitioned (failed at `{id}`)")).into(),
            )
        }
    };
    let record = AllocationFile::from_toml(&fs::read_to_string(allocation)?)?;
    let (config, alloc) = record.apply(&config)?;
    let duration = Time::s(duration_s);
    let plan = inject_attacks(&config, attacks, duration, seed);
    let sim = simulate(&config, &alloc, duration, &plan)?;
    let detections = detection_latency_with(&sim, &plan, detection.into());

    fs::create_dir_all(out)?;
    write_detections(
        BufWriter::new(File::create(out.join("detections.csv"))?),
        &detections.samples,
    )?;
    if trace {
        write_trace(BufWriter::new(File::create(out.join("trace.csv"))?), &sim)?;
    }

    let latencies = detections.latencies();
    let mean_latency = mean(&latencies).ok();
    let mut cdf = Vec::new();
    if let Some(&max) = latencies.iter().max() {
        let points = cdf_points.max(1);
        for k in 0..=points {
            let x = Time(max.0 * k / points);
            cdf.push(CdfPoint {
                latency_us: x.0,
                fraction: decimal(&empirical_cdf(&latencies, x)?, DECIMAL_DIGITS),
            });
        }
    }
    let summary = SimSummary {
        duration_us: duration.0,
        attacks,
        seed,
        detection: match detection {
            Detection::NextRelease => "next_release",
            Detection::NextCompletion => "next_completion",
        },
        samples: latencies.len(),
        censored: detections.censored,
        mean_latency_us: mean_latency.as_ref().map(|m| decimal(m, DECIMAL_DIGITS)),
        mean_latency_exact: mean_latency.as_ref().map(exact),
        note: latencies.is_empty().then(|| "no detection samples".to_string()),
        deadline_misses: sim.total_misses(),
        cdf,
    };
    fs::write(
        out.join("summary.toml"),
        toml::to_string(&summary).map_err(|e| Error::Parse(e.to_string()))?,
    )?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_experiment(
    kind: ExperimentKind,
    out: &Path,
    replications: usize,
    seed: u64,
    cores: Vec<usize>,
    duration_s: u64,
    attacks: usize,
    limit: u128,
) -> CmdResult {
    if cores.contains(&0) {
        return Err(Error::InvalidParam {
            field: "cores",
            reason: "core counts must be positive".into(),
        }
        .into());
    }
    fs::create_dir_all(out)?;
    let csv = |name: &str| -> Result<BufWriter<File>, Failure> { Ok(BufWriter::new(File::create(out.join(name))?)) };
    match kind {
        ExperimentKind::AppendixCompare => {
            let params = AppendixParams {
                replications,
                master_seed: seed,
                max_assignments: limit,
                ..Default::default()
            };
            let rows = with_workers(|| appendix_compare(&params))?;
            write_csv(csv("appendix_compare.csv")?, rows.iter().map(AppendixCsvRow::from))?;
        }
        ExperimentKind::DetectionCdf => {
            let params = DetectionParams {
                cores: cores.clone(),
                configs: replications,
                duration: Time::s(duration_s),
                attacks,
                master_seed: seed,
                ..Default::default()
            };
            let runs = with_workers(|| detection_cdf(&params))?;
            write_csv(csv("detection_samples.csv")?, detection_sample_rows(&runs))?;
            write_csv(
                csv("detection_summary.csv")?,
                runs.iter().map(DetectionSummaryCsvRow::from),
            )?;
            write_csv(csv("detection_improvement.csv")?, improvement_rows(&runs, &cores))?;
        }
        ExperimentKind::SchedulabilitySweep => {
            let params = SweepParams {
                cores,
                replications,
                master_seed: seed,
            };
            let rows = with_workers(|| schedulability_sweep(&params))?;
            write_csv(
                csv("acceptance_ratios.csv")?,
                acceptance_rows(&acceptance_ratios(&rows)),
            )?;
        }
    }
    Ok(())
}
