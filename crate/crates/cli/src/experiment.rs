//! Seeded runs, aggregation across seeds and the trajectory-count sweep.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use d2lab_core::agent::{pretrain_discriminator, train, train_no_discriminator, TrainingLog};
use d2lab_core::baselines::run_bc;
use d2lab_core::demos::{load_demos, subsample, DemoSet};
use d2lab_core::rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::CliError;

pub const AGGREGATE_COLUMNS: [&str; 5] =
    ["step", "n_seeds", "mean_normalized_return", "std_normalized_return", "mean_eval_return"];
pub const SWEEP_COLUMNS: [&str; 6] =
    ["n_trajectories", "n_seeds", "final_step", "mean_final_normalized_return", "std_final_normalized_return", "method"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub step: usize,
    pub n_seeds: usize,
    pub mean_normalized_return: f64,
    /// Sample standard deviation (n-1 denominator); 0 for a single seed.
    pub std_normalized_return: f64,
    pub mean_eval_return: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n_trajectories: usize,
    pub n_seeds: usize,
    pub final_step: usize,
    pub mean_final_normalized_return: f64,
    pub std_final_normalized_return: f64,
    pub method: String,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub logs: Vec<TrainingLog>,
    pub aggregate: Vec<AggregateRow>,
}

pub fn seed_csv_path(dir: &Path, seed: u64) -> PathBuf {
    dir.join(format!("seed_{seed}.csv"))
}

pub fn aggregate_csv_path(dir: &Path) -> PathBuf {
    dir.join("aggregate.csv")
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean and spread of the normalized return per evaluation step, over the
/// seeds that logged that step.
pub fn aggregate(logs: &[TrainingLog]) -> Vec<AggregateRow> {
    let mut by_step: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for log in logs {
        for row in &log.rows {
            let entry = by_step.entry(row.step).or_default();
            entry.0.push(row.normalized_return);
            entry.1.push(row.eval_return);
        }
    }
    by_step
        .into_iter()
        .map(|(step, (norm, raw))| {
            let (mean, std) = mean_std(&norm);
            AggregateRow {
                step,
                n_seeds: norm.len(),
                mean_normalized_return: mean,
                std_normalized_return: std,
                mean_eval_return: mean_std(&raw).0,
            }
        })
        .collect()
}

pub fn load_experiment_demos(cfg: &ExperimentConfig) -> Result<DemoSet, CliError> {
    let path = cfg.demo_path.as_ref().ok_or_else(|| CliError::Config("demo_path is required".into()))?;
    if !path.exists() {
        return Err(CliError::Failure(format!("demo file {} does not exist", path.display())));
    }
    let demos = load_demos(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    if demos.env_id != cfg.env_id {
        return Err(CliError::Config(format!(
            "env_id is {:?} but the demonstrations were recorded on {:?}",
            cfg.env_id, demos.env_id
        )));
    }
    Ok(demos)
}

/// The demonstrations one seed trains on.
pub fn demos_for_seed(demos: &DemoSet, n_trajectories: Option<usize>, seed: u64) -> Result<DemoSet, CliError> {
    match n_trajectories {
        None => Ok(demos.clone()),
        Some(k) if k > demos.trajectories.len() => Err(CliError::Failure(format!(
            "contract violation: {k} trajectories requested but only {} available",
            demos.trajectories.len()
        ))),
        Some(k) if k == demos.trajectories.len() => Ok(demos.clone()),
        Some(k) => Ok(subsample(demos, k, rng::substream_seed(seed, "subsample"))?),
    }
}

/// One seed of one method.
pub fn run_seed(cfg: &ExperimentConfig, demos: &DemoSet, seed: u64) -> Result<TrainingLog, CliError> {
    let demos = demos_for_seed(demos, cfg.n_trajectories, seed)?;
    let d2 = cfg.resolved_d2();
    let log = match cfg.method {
        Method::D2 => {
            let (disc, report) = pretrain_discriminator(&demos, &cfg.disc, seed)?;
            log::info!("seed {seed}: discriminator train accuracy {:.4}", report.train_accuracy);
            for w in &report.warnings {
                log::warn!("seed {seed}: {w}");
            }
            train(&d2, &demos, &disc, seed)?.log
        }
        Method::NoDisc => train_no_discriminator(&d2, &demos, seed)?.log,
        Method::Bc => run_bc(&demos, &cfg.bc, seed)?.1,
    };
    if let Some(last) = log.last() {
        log::info!("seed {seed}: step {} normalized return {:.4}", last.step, last.normalized_return);
    }
    Ok(log)
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    if rows.is_empty() {
        w.write_record(header).map_err(|e| CliError::Failure(e.to_string()))?;
    }
    for row in rows {
        w.serialize(row).map_err(|e| CliError::Failure(e.to_string()))?;
    }
    w.flush().map_err(|e| CliError::Failure(e.to_string()))?;
    Ok(())
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<(), CliError> {
    write_csv(path, rows, &AGGREGATE_COLUMNS)
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
    r.deserialize().collect::<Result<_, _>>().map_err(|e| CliError::Failure(e.to_string()))
}

/// All seeds into `dir`: one CSV per seed, `aggregate.csv` and the resolved
/// `config.json`.
pub fn run_into(cfg: &ExperimentConfig, demos: &DemoSet, dir: &Path) -> Result<RunResult, CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Failure(format!("{}: {e}", dir.display())))?;
    fs::write(dir.join("config.json"), cfg.to_json()).map_err(|e| CliError::Failure(e.to_string()))?;
    let mut logs = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let log = run_seed(cfg, demos, seed)?;
        let path = seed_csv_path(dir, seed);
        let file = fs::File::create(&path).map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        log.write_csv(file)?;
        logs.push(log);
    }
    let aggregate = aggregate(&logs);
    write_aggregate(&aggregate_csv_path(dir), &aggregate)?;
    Ok(RunResult { logs, aggregate })
}

pub fn cmd_run(cfg: &ExperimentConfig) -> Result<RunResult, CliError> {
    let demos = load_experiment_demos(cfg)?;
    run_into(cfg, &demos, &cfg.output_dir)
}

/// Final-step summary per trajectory count; each count runs into
/// `output_dir/n{count}`.
pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>, CliError> {
    if cfg.sweep_counts.is_empty() || cfg.sweep_counts.contains(&0) {
        return Err(CliError::Config("sweep_counts must be non-empty positive counts".into()));
    }
    let demos = load_experiment_demos(cfg)?;
    let max = *cfg.sweep_counts.iter().max().unwrap();
    if max > demos.trajectories.len() {
        return Err(CliError::Failure(format!(
            "contract violation: sweep needs {max} trajectories but the demo file holds {}",
            demos.trajectories.len()
        )));
    }
    let mut rows = Vec::with_capacity(cfg.sweep_counts.len());
    for &count in &cfg.sweep_counts {
        let sub = ExperimentConfig { n_trajectories: Some(count), ..cfg.clone() };
        let result = run_into(&sub, &demos, &cfg.output_dir.join(format!("n{count}")))?;
        let finals: Vec<(usize, f64)> =
            result.logs.iter().filter_map(|l| l.last()).map(|r| (r.step, r.normalized_return)).collect();
        let values: Vec<f64> = finals.iter().map(|f| f.1).collect();
        let (mean, std) = mean_std(&values);
        rows.push(SweepRow {
            n_trajectories: count,
            n_seeds: values.len(),
            final_step: finals.iter().map(|f| f.0).max().unwrap_or(0),
            mean_final_normalized_return: mean,
            std_final_normalized_return: std,
            method: cfg.method.as_str().into(),
        });
    }
    write_csv(&cfg.output_dir.join("sweep.csv"), &rows, &SWEEP_COLUMNS)?;
    Ok(rows)
}
