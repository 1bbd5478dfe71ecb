//! Tabular regression datasets: ingestion, synthetic generation, splitting
//! and feature normalization.

mod csv_io;
mod split;
mod synthetic;

pub use csv_io::{load_csv, write_csv, CsvSchema};
pub use split::{normalize_features, split_train_test, NormStats};
pub use synthetic::{generate_synthetic, synthetic_target, SyntheticSpec};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// One design: its parameter vector, the scalar quantity of interest and an
/// optional input category (e.g. a body style).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: u64,
    pub features: Vec<f64>,
    pub target: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    name: String,
    feature_names: Vec<String>,
    samples: Vec<Sample>,
}

impl Dataset {
    /// Builds a dataset, checking that it is non-empty, that every row has
    /// `feature_names.len()` finite features and a finite target, and that
    /// ids are unique.
    pub fn new(
        name: impl Into<String>,
        feature_names: Vec<String>,
        samples: Vec<Sample>,
    ) -> Result<Self> {
        let name = name.into();
        if samples.is_empty() {
            return Err(CoreError::Argument(format!("dataset `{name}` is empty")));
        }
        if feature_names.is_empty() {
            return Err(CoreError::Argument(format!(
                "dataset `{name}` has no features"
            )));
        }
        let dim = feature_names.len();
        let mut ids = std::collections::HashSet::with_capacity(samples.len());
        for s in &samples {
            if s.features.len() != dim {
                return Err(CoreError::Shape(format!(
                    "sample {} has {} features, dataset `{name}` has {dim}",
                    s.id,
                    s.features.len()
                )));
            }
            if !s.target.is_finite() || s.features.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Argument(format!(
                    "sample {} is not finite",
                    s.id
                )));
            }
            if !ids.insert(s.id) {
                return Err(CoreError::Argument(format!("duplicate sample id {}", s.id)));
            }
        }
        Ok(Self {
            name,
            feature_names,
            samples,
        })
    }

    /// Same names and features, different sample selection.
    pub fn with_samples(&self, name: impl Into<String>, samples: Vec<Sample>) -> Result<Self> {
        Self::new(name, self.feature_names.clone(), samples)
    }

    /// Concatenates datasets that share a feature layout.
    pub fn concat<'a>(
        name: impl Into<String>,
        parts: impl IntoIterator<Item = &'a Dataset>,
    ) -> Result<Self> {
        let mut iter = parts.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| CoreError::Argument("concatenating zero datasets".into()))?;
        let mut samples = first.samples.clone();
        for part in iter {
            if part.feature_names != first.feature_names {
                return Err(CoreError::Shape(format!(
                    "cannot concatenate `{}` and `{}`: feature layouts differ",
                    first.name, part.name
                )));
            }
            samples.extend_from_slice(&part.samples);
        }
        Self::new(name, first.feature_names.clone(), samples)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn targets(&self) -> Array1<f64> {
        self.samples.iter().map(|s| s.target).collect()
    }

    /// Row-major feature matrix, one row per sample.
    pub fn feature_matrix(&self) -> Array2<f64> {
        let dim = self.feature_dim();
        let flat: Vec<f64> = self
            .samples
            .iter()
            .flat_map(|s| s.features.iter().copied())
            .collect();
        Array2::from_shape_vec((self.samples.len(), dim), flat).expect("rows share feature_dim")
    }

    pub fn has_categories(&self) -> bool {
        self.samples.iter().all(|s| s.category.is_some())
    }

    /// Distinct category labels in order of first appearance.
    pub fn categories(&self) -> Vec<String> {
        let mut seen = Vec::new();
        for s in &self.samples {
            if let Some(c) = &s.category {
                if !seen.contains(c) {
                    seen.push(c.clone());
                }
            }
        }
        seen
    }
}

#[cfg(test)]
pub(crate) fn toy_dataset(targets: &[f64], categories: Option<&[&str]>) -> Dataset {
    let samples = targets
        .iter()
        .enumerate()
        .map(|(i, &t)| Sample {
            id: i as u64,
            features: vec![i as f64, t * 0.5],
            target: t,
            category: categories.map(|c| c[i % c.len()].to_string()),
        })
        .collect();
    Dataset::new("toy", vec!["a".into(), "b".into()], samples).unwrap()
}
