//! Drag-like synthetic regression data.
//!
//! Category `c` (0-based) is a Gaussian cluster with unit per-feature standard
//! deviation centred at `CENTER_SPACING * c / sqrt(d)` in every coordinate, so
//! neighbouring centres sit `CENTER_SPACING` apart (at least 4 cluster
//! standard deviations). With `v = sum(x) / (CENTER_SPACING * sqrt(d))`, which
//! equals `c` at the centre of cluster `c`, the target is
//!
//! ```text
//! y = 0.1 * (1.2 + v - sin(2 pi v) / (2 pi) + 0.2 sin(2 x_0)) + noise
//! ```
//!
//! The `v - sin(2 pi v) / (2 pi)` term is a smooth staircase: flat around every
//! cluster centre and steep between them, so each cluster sits on its own
//! target level while the `sin(2 x_0)` term varies the target inside a
//! cluster. Values are drag-coefficient sized (roughly 0.06 to 0.1 * (1.4 + c)).
//! Labels are assigned round-robin: sample `i` belongs to category `i % n_categories`.

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{CoreError, Result};
use crate::rng;

pub const CENTER_SPACING: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_samples: usize,
    pub feature_dim: usize,
    pub n_categories: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.feature_dim == 0 || self.n_categories == 0 {
            return Err(CoreError::Config(
                "synthetic n_samples, feature_dim and n_categories must be positive".into(),
            ));
        }
        if self.n_samples < self.n_categories {
            return Err(CoreError::Config(format!(
                "{} samples cannot cover {} categories",
                self.n_samples, self.n_categories
            )));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(CoreError::Config(format!(
                "noise_std must be a non-negative real, got {}",
                self.noise_std
            )));
        }
        Ok(())
    }
}

/// Noise-free target for one feature vector.
pub fn synthetic_target(features: &[f64]) -> f64 {
    use std::f64::consts::TAU;
    let d = features.len() as f64;
    let v = features.iter().sum::<f64>() / (CENTER_SPACING * d.sqrt());
    0.1 * (1.2 + v - (TAU * v).sin() / TAU + 0.2 * (2.0 * features[0]).sin())
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut feature_rng = rng::stream(spec.seed, "synthetic-features", 0);
    let mut noise_rng = rng::stream(spec.seed, "synthetic-noise", 0);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let offset_scale = CENTER_SPACING / (spec.feature_dim as f64).sqrt();

    let samples = (0..spec.n_samples)
        .map(|i| {
            let category = i % spec.n_categories;
            let center = offset_scale * category as f64;
            let features: Vec<f64> = (0..spec.feature_dim)
                .map(|_| center + unit.sample(&mut feature_rng))
                .collect();
            let noise = if spec.noise_std > 0.0 {
                spec.noise_std * unit.sample(&mut noise_rng)
            } else {
                0.0
            };
            Sample {
                id: i as u64,
                target: synthetic_target(&features) + noise,
                features,
                category: Some(format!("c{category}")),
            }
        })
        .collect();
    let names = (0..spec.feature_dim).map(|j| format!("x{j}")).collect();
    Dataset::new("synthetic", names, samples)
}
