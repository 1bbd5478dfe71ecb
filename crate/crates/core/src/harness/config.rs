use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{generate_synthetic, load_csv, CsvSchema, Dataset, SyntheticSpec};
use crate::error::{CoreError, Result};
use crate::scenarios::{build_bin_incremental, build_input_incremental, BinMode, ExperienceStream};
use crate::strategies::{StrategyParams, TrainConfig};

/// Where the benchmark's data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        feature_columns: Vec<String>,
        target_column: String,
        #[serde(default)]
        category_column: Option<String>,
    },
}

impl DatasetSource {
    /// Relative CSV paths resolve against `base_dir` (the config file's directory).
    pub fn load(&self, base_dir: &Path) -> Result<Dataset> {
        match self {
            DatasetSource::Synthetic(spec) => generate_synthetic(spec),
            DatasetSource::Csv {
                path,
                feature_columns,
                target_column,
                category_column,
            } => {
                let full = if path.is_relative() {
                    base_dir.join(path)
                } else {
                    path.clone()
                };
                let schema = CsvSchema {
                    feature_columns: feature_columns.clone(),
                    target_column: target_column.clone(),
                    category_column: category_column.clone(),
                };
                load_csv(full, &schema)
            }
        }
    }
}

fn default_test_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioConfig {
    BinIncremental {
        n_bins: usize,
        #[serde(default)]
        mode: BinMode,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    InputIncremental {
        /// Experience order by category label; defaults to order of first appearance.
        #[serde(default)]
        category_order: Option<Vec<String>>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
}

impl ScenarioConfig {
    /// Builds the stream for one trial and z-scores its features with
    /// statistics from the stream's training data.
    pub fn build(&self, dataset: &Dataset, seed: u64) -> Result<ExperienceStream> {
        let stream = match self {
            ScenarioConfig::BinIncremental {
                n_bins,
                mode,
                test_fraction,
            } => build_bin_incremental(dataset, *n_bins, *mode, *test_fraction, seed)?,
            ScenarioConfig::InputIncremental {
                category_order,
                test_fraction,
            } => {
                let order = category_order
                    .clone()
                    .unwrap_or_else(|| dataset.categories());
                build_input_incremental(dataset, &order, *test_fraction, seed)?
            }
        };
        Ok(stream.normalized()?.0)
    }
}

fn default_trials() -> usize {
    5
}

fn default_parallelism() -> usize {
    1
}

fn default_output() -> PathBuf {
    PathBuf::from("results")
}

/// Everything needed to reproduce one benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    #[serde(default)]
    pub name: String,
    pub dataset: DatasetSource,
    pub scenario: ScenarioConfig,
    pub strategies: Vec<StrategyParams>,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Concurrent runs. 1 keeps runs sequential so wall-clock times are comparable.
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
}

impl BenchmarkConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CoreError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| CoreError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(CoreError::Config(
                "at least one strategy is required".into(),
            ));
        }
        for (i, s) in self.strategies.iter().enumerate() {
            if self.strategies[..i].iter().any(|o| o.kind() == s.kind()) {
                return Err(CoreError::Config(format!(
                    "strategy `{}` listed twice",
                    s.kind()
                )));
            }
        }
        if self.n_trials == 0 {
            return Err(CoreError::Config("n_trials must be at least 1".into()));
        }
        if self.parallelism == 0 {
            return Err(CoreError::Config("parallelism must be at least 1".into()));
        }
        if let DatasetSource::Synthetic(spec) = &self.dataset {
            spec.validate()?;
        }
        self.train.validate()
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    /// The desk-scale synthetic bin-incremental benchmark: 2,000 samples,
    /// 8 features, 3 categories, 4 quantile bins, all five strategies, 5 trials.
    pub fn synthetic_benchmark() -> Self {
        Self {
            name: "synthetic-bin-incremental".into(),
            dataset: DatasetSource::Synthetic(SyntheticSpec {
                n_samples: 2000,
                feature_dim: 8,
                n_categories: 3,
                noise_std: 0.005,
                seed: 0,
            }),
            scenario: ScenarioConfig::BinIncremental {
                n_bins: 4,
                mode: BinMode::Quantile,
                test_fraction: 0.2,
            },
            strategies: crate::strategies::StrategyKind::ALL
                .iter()
                .map(|k| k.default_params())
                .collect(),
            train: TrainConfig::default(),
            n_trials: 5,
            base_seed: 0,
            output_dir: default_output(),
            parallelism: 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategies::StrategyKind;

    const EXAMPLE: &str = r#"
name = "demo"
n_trials = 2
base_seed = 10

[dataset]
kind = "synthetic"
n_samples = 200
feature_dim = 4
n_categories = 2
noise_std = 0.01
seed = 3

[scenario]
kind = "bin_incremental"
n_bins = 3
mode = "equal_width"

[train]
epochs_per_experience = 2
batch_size = 16
learning_rate = 0.001
hidden_layers = [8]

[[strategies]]
kind = "naive"

[[strategies]]
kind = "replay"
budget = 20

[[strategies]]
kind = "gem"
ppe = 8
"#;

    #[test]
    fn parses_every_section() {
        let c = BenchmarkConfig::from_toml_str(EXAMPLE).unwrap();
        assert_eq!(c.n_trials, 2);
        assert_eq!(c.trial_seed(1), 11);
        assert!(matches!(
            c.scenario,
            ScenarioConfig::BinIncremental {
                n_bins: 3,
                mode: BinMode::EqualWidth,
                ..
            }
        ));
        assert_eq!(c.strategies[1], StrategyParams::Replay { budget: Some(20) });
        assert_eq!(
            c.strategies[2],
            StrategyParams::Gem {
                ppe: 8,
                margin: 0.0
            }
        );
        assert_eq!(c.train.hidden_layers, vec![8]);
        assert_eq!(c.parallelism, 1);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = BenchmarkConfig::synthetic_benchmark();
        let text = c.to_toml_string().unwrap();
        assert_eq!(BenchmarkConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for (from, to) in [
            ("n_trials = 2", "n_trials = 2\nbogus = 1"),
            ("noise_std = 0.01", "noise_std = 0.01\nbogus = 1"),
            ("n_bins = 3", "n_bins = 3\nbogus = 1"),
            ("batch_size = 16", "batch_size = 16\nbogus = 1"),
            ("budget = 20", "budget = 20\nbogus = 1"),
        ] {
            let text = EXAMPLE.replace(from, to);
            assert!(
                matches!(
                    BenchmarkConfig::from_toml_str(&text),
                    Err(CoreError::Config(_))
                ),
                "accepted unknown key after `{from}`"
            );
        }
    }

    #[test]
    fn invariants_enforced() {
        let mut c = BenchmarkConfig::synthetic_benchmark();
        c.strategies.clear();
        assert!(c.validate().is_err());
        let mut c = BenchmarkConfig::synthetic_benchmark();
        c.n_trials = 0;
        assert!(c.validate().is_err());
        let mut c = BenchmarkConfig::synthetic_benchmark();
        c.strategies.push(StrategyKind::Naive.default_params());
        assert!(c.validate().is_err());
    }

    #[test]
    fn csv_source_parses_schema_inline() {
        let text = EXAMPLE.replace(
            "kind = \"synthetic\"\nn_samples = 200\nfeature_dim = 4\nn_categories = 2\nnoise_std = 0.01\nseed = 3",
            "kind = \"csv\"\npath = \"cars.csv\"\nfeature_columns = [\"a\", \"b\"]\ntarget_column = \"cd\"\ncategory_column = \"body\"",
        );
        let c = BenchmarkConfig::from_toml_str(&text).unwrap();
        let bad = text.replace(
            "target_column = \"cd\"",
            "target_column = \"cd\"\nbogus = 1",
        );
        assert!(BenchmarkConfig::from_toml_str(&bad).is_err());
        match c.dataset {
            DatasetSource::Csv {
                path,
                category_column,
                ..
            } => {
                assert_eq!(path, PathBuf::from("cars.csv"));
                assert_eq!(category_column.as_deref(), Some("body"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
