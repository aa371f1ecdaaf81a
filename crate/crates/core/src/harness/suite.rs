//! Multi-seed execution with per-seed directories, resumption and crash
//! isolation.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{step_curve, CurveSummary};
use super::{ExperimentConfig, HarnessError};
use crate::sac::{run_training, MetricsLog};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MARKER_FILE: &str = "complete.toml";
pub const ERROR_FILE: &str = "error.txt";
pub const CONFIG_FILE: &str = "config.toml";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const BY_EPISODE_FILE: &str = "aggregate_by_episode.csv";
pub const BY_STEP_FILE: &str = "aggregate_by_step.csv";

/// Grid spacing of the step-indexed aggregate.
pub const STEP_GRID: usize = 1000;

/// Written next to a finished seed's CSV; its presence (with a matching
/// fingerprint) is what lets a rerun skip the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunInfo {
    pub fingerprint: String,
    pub seed: u64,
    pub env_steps: usize,
    pub train_steps: usize,
    pub relabel_window: usize,
    pub demo_transitions_added: usize,
    pub final_buffer_demo_ratio: f64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeedStatus {
    Ran,
    Resumed,
    Failed(String),
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub status: SeedStatus,
    pub log: Option<MetricsLog>,
    pub info: Option<RunInfo>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub dir: PathBuf,
    pub seeds: Vec<SeedOutcome>,
    /// Over the completed seeds only; `None` when every seed failed.
    pub curve: Option<CurveSummary>,
}

impl SuiteOutcome {
    pub fn complete(&self) -> bool {
        self.seeds
            .iter()
            .all(|s| !matches!(s.status, SeedStatus::Failed(_)))
    }

    pub fn logs(&self) -> Vec<&MetricsLog> {
        self.seeds.iter().filter_map(|s| s.log.as_ref()).collect()
    }
}

pub fn seed_dir(suite_dir: &Path, seed: u64) -> PathBuf {
    suite_dir.join(format!("seed_{seed}"))
}

/// Where a suite for `config` is written below `root`.
pub fn suite_dir(root: &Path, config: &ExperimentConfig) -> PathBuf {
    root.join(&config.preset)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| HarnessError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| HarnessError::io(path, e))
}

pub fn read_metrics(path: &Path) -> Result<MetricsLog, HarnessError> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    MetricsLog::read_csv(file).map_err(|e| HarnessError::Csv(format!("{}: {e}", path.display())))
}

/// A finished seed from an earlier invocation of the same configuration.
fn resume(dir: &Path, fingerprint: &str) -> Option<(MetricsLog, RunInfo)> {
    let text = fs::read_to_string(dir.join(MARKER_FILE)).ok()?;
    let info: RunInfo = toml::from_str(&text).ok()?;
    if info.fingerprint != fingerprint {
        return None;
    }
    let log = read_metrics(&dir.join(METRICS_FILE)).ok()?;
    Some((log, info))
}

fn run_seed(config: &ExperimentConfig, dir: &Path, seed: u64) -> Result<(MetricsLog, RunInfo), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let _ = fs::remove_file(dir.join(MARKER_FILE));
    let _ = fs::remove_file(dir.join(ERROR_FILE));
    let start = Instant::now();
    let run_cfg = config.run_config();
    let result = panic::catch_unwind(AssertUnwindSafe(|| run_training(&run_cfg, seed)))
        .map_err(|p| {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            HarnessError::SeedPanicked(msg)
        })??;
    let mut csv = Vec::new();
    result
        .log
        .write_csv(&mut csv)
        .map_err(|e| HarnessError::Csv(e.to_string()))?;
    write_atomic(&dir.join(METRICS_FILE), &csv)?;
    let info = RunInfo {
        fingerprint: config.run_fingerprint(),
        seed,
        env_steps: result.env_steps,
        train_steps: result.train_steps,
        relabel_window: result.relabel_window,
        demo_transitions_added: result.demo_transitions_added,
        final_buffer_demo_ratio: result.final_buffer_demo_ratio,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    };
    let marker = toml::to_string(&info).expect("run info serializes");
    write_atomic(&dir.join(MARKER_FILE), marker.as_bytes())?;
    Ok((result.log, info))
}

/// Runs (or resumes) every seed of `config` below `root`, `parallelism`
/// seeds at a time, then writes the aggregate and summary files.
pub fn run_suite(config: &ExperimentConfig, root: &Path, parallelism: usize) -> Result<SuiteOutcome, HarnessError> {
    config.validate()?;
    let dir = suite_dir(root, config);
    fs::create_dir_all(&dir).map_err(|e| HarnessError::io(&dir, e))?;
    config.save(&dir.join(CONFIG_FILE))?;
    let fingerprint = config.run_fingerprint();
    let seeds: Vec<u64> = config.seeds().collect();

    let work = |seed: u64| -> SeedOutcome {
        let sdir = seed_dir(&dir, seed);
        if let Some((log, info)) = resume(&sdir, &fingerprint) {
            return SeedOutcome {
                seed,
                status: SeedStatus::Resumed,
                log: Some(log),
                info: Some(info),
            };
        }
        match run_seed(config, &sdir, seed) {
            Ok((log, info)) => SeedOutcome {
                seed,
                status: SeedStatus::Ran,
                log: Some(log),
                info: Some(info),
            },
            Err(e) => {
                let msg = e.to_string();
                let _ = fs::write(sdir.join(ERROR_FILE), format!("{msg}\n"));
                SeedOutcome {
                    seed,
                    status: SeedStatus::Failed(msg),
                    log: None,
                    info: None,
                }
            }
        }
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    let outcomes: Vec<SeedOutcome> = pool.install(|| seeds.par_iter().map(|&s| work(s)).collect());

    let logs: Vec<MetricsLog> = outcomes.iter().filter_map(|o| o.log.clone()).collect();
    let curve = if logs.is_empty() {
        None
    } else {
        Some(CurveSummary::from_logs(&config.preset, &logs)?)
    };
    let outcome = SuiteOutcome {
        dir: dir.clone(),
        seeds: outcomes,
        curve,
    };
    write_aggregates(&outcome, &logs)?;
    write_summary(&outcome)?;
    Ok(outcome)
}

fn csv_file(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let f = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(f)))
}

fn csv_err(e: csv::Error) -> HarnessError {
    HarnessError::Csv(e.to_string())
}

fn write_aggregates(outcome: &SuiteOutcome, logs: &[MetricsLog]) -> Result<(), HarnessError> {
    let mut w = csv_file(&outcome.dir.join(BY_EPISODE_FILE))?;
    w.write_record(["episode", "mean_rolling_success", "stderr", "n_seeds"])
        .map_err(csv_err)?;
    if let Some(c) = &outcome.curve {
        for k in 0..c.len() {
            w.write_record([
                (k + 1).to_string(),
                c.mean[k].to_string(),
                c.stderr[k].to_string(),
                c.n_seeds.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| HarnessError::io(&outcome.dir, e))?;

    let mut w = csv_file(&outcome.dir.join(BY_STEP_FILE))?;
    w.write_record(["env_steps", "mean_rolling_success", "stderr", "n_seeds"])
        .map_err(csv_err)?;
    for (step, m, se) in step_curve(logs, STEP_GRID) {
        w.write_record([
            step.to_string(),
            m.to_string(),
            se.to_string(),
            logs.len().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(&outcome.dir, e))
}

fn write_summary(outcome: &SuiteOutcome) -> Result<(), HarnessError> {
    let path = outcome.dir.join(SUMMARY_FILE);
    let mut w = csv_file(&path)?;
    w.write_record([
        "seed",
        "status",
        "episodes",
        "env_steps",
        "episodes_to_90",
        "final_rolling_success",
        "mean_demo_batch_fraction",
    ])
    .map_err(csv_err)?;
    for s in &outcome.seeds {
        let status = match &s.status {
            SeedStatus::Ran => "ran".to_string(),
            SeedStatus::Resumed => "resumed".to_string(),
            SeedStatus::Failed(msg) => format!("failed: {msg}"),
        };
        let (episodes, steps, e90, fin, dbf) = match &s.log {
            Some(l) => {
                (
                    l.len().to_string(),
                    l.records.last().map_or(0, |r| r.env_steps).to_string(),
                    l.episodes_to(super::curves::HEADLINE_THRESHOLD)
                        .map_or_else(String::new, |e| e.to_string()),
                    l.rolling_success().to_string(),
                    l.training_demo_fraction().to_string(),
                )
            }
            None => Default::default(),
        };
        w.write_record([s.seed.to_string(), status, episodes, steps, e90, fin, dbf])
            .map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(&path, e))?;
    Ok(())
}

/// Rebuilds a suite's curve from the per-seed CSVs alone.
pub fn load_suite(dir: &Path) -> Result<CurveSummary, HarnessError> {
    let mut seeds: Vec<(u64, PathBuf)> = fs::read_dir(dir)
        .map_err(|e| HarnessError::io(dir, e))?
        .filter_map(Result::ok)
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let seed = name.strip_prefix("seed_")?.parse().ok()?;
            let csv = e.path().join(METRICS_FILE);
            (csv.exists() && e.path().join(MARKER_FILE).exists()).then_some((seed, csv))
        })
        .collect();
    seeds.sort();
    let logs = seeds
        .iter()
        .map(|(_, p)| read_metrics(p))
        .collect::<Result<Vec<_>, _>>()?;
    let label = dir
        .file_name()
        .map_or_else(|| "suite".into(), |n| n.to_string_lossy().into_owned());
    CurveSummary::from_logs(&label, &logs)
}

/// Human-readable one-liner per seed, used by the CLI.
pub fn describe(outcome: &SuiteOutcome, mut out: impl Write) -> std::io::Result<()> {
    for s in &outcome.seeds {
        match (&s.status, &s.log) {
            (SeedStatus::Failed(msg), _) => writeln!(out, "seed {}: FAILED {msg}", s.seed)?,
            (status, Some(l)) => writeln!(
                out,
                "seed {}: {} episodes, episodes to 90%: {}, final rolling success {:.3}{}",
                s.seed,
                l.len(),
                l.episodes_to(super::curves::HEADLINE_THRESHOLD)
                    .map_or_else(|| "not reached".into(), |e| e.to_string()),
                l.rolling_success(),
                if *status == SeedStatus::Resumed { " (resumed)" } else { "" }
            )?,
            _ => {}
        }
    }
    writeln!(out, "results in {}", outcome.dir.display())
}
