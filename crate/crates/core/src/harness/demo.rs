use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{BenchmarkConfig, ScenarioConfig};
use crate::error::{CoreError, Result};
use crate::metrics;
use crate::strategies::{train_stream_with_model, StrategyParams};

/// Final-model behaviour on one target bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoBin {
    pub task_id: usize,
    /// Smallest and largest target in the bin, train and test combined.
    pub target_range: (f64, f64),
    pub percent_error: f64,
    pub targets: Vec<f64>,
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoTrial {
    pub seed: u64,
    pub bins: Vec<DemoBin>,
    /// Percent error on the first bin over percent error on the last.
    pub error_ratio: f64,
    /// Share of final test predictions inside the last two bins' target range.
    pub late_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub trials: Vec<DemoTrial>,
    pub median_error_ratio: f64,
    pub median_late_fraction: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Trains Naive on each trial's bin-incremental stream and records where the
/// final model's predictions land. The configured strategy list is ignored.
pub fn demo_forgetting_in(config: &BenchmarkConfig, base_dir: &Path) -> Result<DemoReport> {
    if !matches!(config.scenario, ScenarioConfig::BinIncremental { .. }) {
        return Err(CoreError::Config(
            "the forgetting demo needs a bin_incremental scenario".into(),
        ));
    }
    config.validate()?;
    let dataset = config.dataset.load(base_dir)?;
    let mut trials = Vec::with_capacity(config.n_trials);
    for t in 0..config.n_trials {
        let seed = config.trial_seed(t);
        let stream = config.scenario.build(&dataset, seed)?;
        let mut train = config.train.clone();
        train.seed = seed;
        let (run, model) = train_stream_with_model(&stream, &StrategyParams::Naive, &train)?;
        let net = model.ok_or_else(|| {
            CoreError::NonFinite(
                run.error
                    .clone()
                    .unwrap_or_else(|| "training diverged".into()),
            )
        })?;

        let mut bins = Vec::with_capacity(stream.len());
        for exp in stream.experiences() {
            let all = exp
                .train
                .targets()
                .iter()
                .chain(exp.test.targets().iter())
                .copied()
                .collect::<Vec<_>>();
            let lo = all.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let targets = exp.test.targets().to_vec();
            let predictions = net
                .forward_batch(exp.test.feature_matrix().view())?
                .to_vec();
            bins.push(DemoBin {
                task_id: exp.task_id,
                target_range: (lo, hi),
                percent_error: metrics::mpe(&predictions, &targets)?,
                targets,
                predictions,
            });
        }
        let last = bins.len() - 1;
        let (late_lo, late_hi) = (
            bins[last.saturating_sub(1)].target_range.0,
            bins[last].target_range.1,
        );
        let total: usize = bins.iter().map(|b| b.predictions.len()).sum();
        let inside = bins
            .iter()
            .flat_map(|b| &b.predictions)
            .filter(|&&p| p >= late_lo && p <= late_hi)
            .count();
        trials.push(DemoTrial {
            seed,
            error_ratio: bins[0].percent_error / bins[last].percent_error,
            late_fraction: inside as f64 / total as f64,
            bins,
        });
    }
    let ratios: Vec<f64> = trials.iter().map(|t| t.error_ratio).collect();
    let fractions: Vec<f64> = trials.iter().map(|t| t.late_fraction).collect();
    Ok(DemoReport {
        median_error_ratio: median(&ratios),
        median_late_fraction: median(&fractions),
        trials,
    })
}

pub fn demo_forgetting(config: &BenchmarkConfig) -> Result<DemoReport> {
    demo_forgetting_in(config, Path::new(""))
}
