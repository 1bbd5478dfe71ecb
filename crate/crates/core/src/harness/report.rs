use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::BenchmarkConfig;
use crate::error::{CoreError, Result};
use crate::metrics;
use crate::strategies::{train_stream, RunResult, StrategyKind};

/// One strategy's run on one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub benchmark: String,
    pub trial: usize,
    pub seed: u64,
    pub run: RunResult,
}

/// Mean and sample standard deviation (0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, std })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub strategy: StrategyKind,
    pub n_runs: usize,
    pub n_failed: usize,
    /// True when at least one trial diverged; statistics then cover the
    /// successful trials only.
    pub degraded: bool,
    pub final_mpe: Option<Stat>,
    pub final_mae: Option<Stat>,
    /// Final-model MAE on each experience.
    pub experience_mae: Vec<Stat>,
    /// Forgetting ratio of each earlier experience after the last stage.
    pub experience_fr: Vec<Stat>,
    pub avg_fr: Option<Stat>,
    /// Lowest final average forgetting ratio over trials.
    pub best_fr: Option<f64>,
    pub runtime_s: Stat,
    pub total_runtime_s: f64,
}

impl StrategySummary {
    pub fn from_runs(strategy: StrategyKind, runs: &[&RunResult]) -> Result<Self> {
        if runs.is_empty() {
            return Err(CoreError::Argument(format!(
                "no runs recorded for `{strategy}`"
            )));
        }
        let ok: Vec<&RunResult> = runs.iter().copied().filter(|r| r.is_ok()).collect();
        let reports = ok
            .iter()
            .map(|r| {
                metrics::MetricsReport::from_matrix(
                    &r.eval_matrix,
                    r.final_test_mae.unwrap_or(f64::NAN),
                    r.final_test_mpe.unwrap_or(f64::NAN),
                )
            })
            .collect::<Result<Vec<_>>>()?;

        let mpes: Vec<f64> = ok.iter().filter_map(|r| r.final_test_mpe).collect();
        let maes: Vec<f64> = ok.iter().filter_map(|r| r.final_test_mae).collect();
        let per_column = |pick: &dyn Fn(&metrics::MetricsReport) -> Vec<f64>| -> Vec<Stat> {
            let columns: Vec<Vec<f64>> = reports.iter().map(pick).collect();
            let width = columns.first().map_or(0, Vec::len);
            (0..width)
                .filter_map(|j| Stat::of(&columns.iter().map(|c| c[j]).collect::<Vec<_>>()))
                .collect()
        };
        let experience_mae = per_column(&|r| r.final_experience_mae.clone());
        let experience_fr = per_column(&|r| r.forgetting_ratio.last().cloned().unwrap_or_default());
        let avg_frs: Vec<f64> = reports
            .iter()
            .filter_map(|r| r.final_avg_forgetting_ratio())
            .collect();
        let best_fr = if avg_frs.is_empty() {
            None
        } else {
            Some(metrics::best_forgetting_over_trials(&avg_frs)?)
        };
        let times: Vec<f64> = runs.iter().map(|r| r.wall_clock_seconds).collect();
        Ok(Self {
            strategy,
            n_runs: runs.len(),
            n_failed: runs.len() - ok.len(),
            degraded: ok.len() < runs.len(),
            final_mpe: Stat::of(&mpes),
            final_mae: Stat::of(&maes),
            experience_mae,
            experience_fr,
            avg_fr: Stat::of(&avg_frs),
            best_fr,
            runtime_s: Stat::of(&times).expect("non-empty"),
            total_runtime_s: times.iter().sum(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub name: String,
    pub n_trials: usize,
    pub summaries: Vec<StrategySummary>,
    /// Ordered by trial, then by the configured strategy order.
    pub records: Vec<TrialRecord>,
}

impl BenchmarkReport {
    /// Aggregates per-trial records; strategies appear in order of first occurrence.
    pub fn from_records(name: impl Into<String>, records: Vec<TrialRecord>) -> Result<Self> {
        let mut order: Vec<StrategyKind> = Vec::new();
        for r in &records {
            if !order.contains(&r.run.strategy) {
                order.push(r.run.strategy);
            }
        }
        if order.is_empty() {
            return Err(CoreError::Argument(
                "a report needs at least one record".into(),
            ));
        }
        let summaries = order
            .iter()
            .map(|&kind| {
                let runs: Vec<&RunResult> = records
                    .iter()
                    .filter(|r| r.run.strategy == kind)
                    .map(|r| &r.run)
                    .collect();
                StrategySummary::from_runs(kind, &runs)
            })
            .collect::<Result<Vec<_>>>()?;
        let n_trials = summaries.iter().map(|s| s.n_runs).max().unwrap_or(0);
        if summaries.iter().any(|s| s.n_runs != n_trials) {
            return Err(CoreError::Argument(
                "strategies have differing trial counts".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            n_trials,
            summaries,
            records,
        })
    }

    pub fn summary(&self, kind: StrategyKind) -> Option<&StrategySummary> {
        self.summaries.iter().find(|s| s.strategy == kind)
    }

    pub fn strategies(&self) -> Vec<StrategyKind> {
        self.summaries.iter().map(|s| s.strategy).collect()
    }

    pub fn runs(&self, kind: StrategyKind) -> impl Iterator<Item = &RunResult> {
        self.records
            .iter()
            .map(|r| &r.run)
            .filter(move |r| r.strategy == kind)
    }

    /// The report with every wall-clock field zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.records {
            r.run.wall_clock_seconds = 0.0;
        }
        for s in &mut out.summaries {
            s.runtime_s = Stat {
                mean: 0.0,
                std: 0.0,
            };
            s.total_runtime_s = 0.0;
        }
        out
    }
}

/// Runs every configured strategy on every trial.
///
/// Trial `t` uses seed `base_seed + t` both for building the stream and for
/// training, so all strategies of a trial see the same experiences. Relative
/// CSV paths resolve against `base_dir`.
pub fn run_benchmark_in(config: &BenchmarkConfig, base_dir: &Path) -> Result<BenchmarkReport> {
    config.validate()?;
    let dataset = config.dataset.load(base_dir)?;
    let streams = (0..config.n_trials)
        .map(|t| config.scenario.build(&dataset, config.trial_seed(t)))
        .collect::<Result<Vec<_>>>()?;

    let units: Vec<(usize, usize)> = (0..config.n_trials)
        .flat_map(|t| (0..config.strategies.len()).map(move |s| (t, s)))
        .collect();
    let run_unit = |&(t, s): &(usize, usize)| -> Result<TrialRecord> {
        let seed = config.trial_seed(t);
        let mut train = config.train.clone();
        train.seed = seed;
        Ok(TrialRecord {
            benchmark: config.name.clone(),
            trial: t,
            seed,
            run: train_stream(&streams[t], &config.strategies[s], &train)?,
        })
    };
    let records = if config.parallelism == 1 {
        units.iter().map(run_unit).collect::<Result<Vec<_>>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.parallelism)
            .build()
            .map_err(|e| CoreError::Run(e.to_string()))?;
        pool.install(|| units.par_iter().map(run_unit).collect::<Result<Vec<_>>>())?
    };
    BenchmarkReport::from_records(config.name.clone(), records)
}

pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    run_benchmark_in(config, Path::new(""))
}
