//! Small feed-forward regression network with exact backpropagation.
//!
//! Parameters live in one flat buffer (weights then bias, layer by layer) so
//! that regularizers and gradient projections can treat the model as a plain
//! vector. Layers are views into that buffer.

mod network;
mod optim;

pub use network::{finite_diff_gradient, fisher_diagonal, RegressionNet};
pub use optim::{OptimizerKind, OptimizerState};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the pre-activation.
    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture of a scalar-output MLP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    /// Identity skip around every hidden layer whose input width equals its output width.
    #[serde(default)]
    pub residual: bool,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}

impl NetworkSpec {
    /// Default desk-scale architecture: three hidden layers of width 64, relu.
    pub fn mlp(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_layers: default_hidden(),
            activation: Activation::Relu,
            residual: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(CoreError::Config("network input_dim must be >= 1".into()));
        }
        if let Some(i) = self.hidden_layers.iter().position(|&w| w == 0) {
            return Err(CoreError::Config(format!(
                "hidden layer {i} has zero width"
            )));
        }
        Ok(())
    }

    /// (fan_in, fan_out) for every affine layer, output layer last.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_layers.len() + 1);
        let mut fan_in = self.input_dim;
        for &w in &self.hidden_layers {
            dims.push((fan_in, w));
            fan_in = w;
        }
        dims.push((fan_in, 1));
        dims
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }
}

macro_rules! flat_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn values(&self) -> &[f64] {
                &self.0
            }

            pub fn values_mut(&mut self) -> &mut [f64] {
                &mut self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }
    };
}

flat_vector!(
    /// Every weight and bias of a network, layer by layer, weights (row-major,
    /// fan_in x fan_out) before biases.
    ParameterVector
);
flat_vector!(
    /// Loss gradient aligned with [`ParameterVector`].
    GradientVector
);
flat_vector!(
    /// Diagonal of the empirical Fisher information, aligned with [`ParameterVector`].
    FisherDiagonal
);

impl GradientVector {
    pub fn dot(&self, other: &GradientVector) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// Mean squared error. The only training loss.
pub fn compute_loss(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(CoreError::Argument("loss over an empty batch".into()));
    }
    if predictions.len() != targets.len() {
        return Err(CoreError::Shape(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sum / predictions.len() as f64)
}
