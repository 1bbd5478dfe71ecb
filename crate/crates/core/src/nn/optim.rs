use serde::{Deserialize, Serialize};

use super::{GradientVector, ParameterVector};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

/// First-order optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step_count: u64,
}

impl OptimizerState {
    pub fn sgd(learning_rate: f64, n_params: usize) -> Result<Self> {
        Self::new(
            OptimizerKind::Sgd,
            learning_rate,
            0.9,
            0.999,
            1e-8,
            n_params,
        )
    }

    pub fn adam(learning_rate: f64, n_params: usize) -> Result<Self> {
        Self::new(
            OptimizerKind::Adam,
            learning_rate,
            0.9,
            0.999,
            1e-8,
            n_params,
        )
    }

    pub fn new(
        kind: OptimizerKind,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        n_params: usize,
    ) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(CoreError::Config(format!(
                "learning rate must be positive, got {learning_rate}"
            )));
        }
        if !(0.0 < beta1 && beta1 < 1.0 && 0.0 < beta2 && beta2 < 1.0) {
            return Err(CoreError::Config(format!(
                "adam betas must lie in (0, 1), got {beta1}, {beta2}"
            )));
        }
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(CoreError::Config(format!(
                "adam epsilon must be positive, got {epsilon}"
            )));
        }
        let moments = match kind {
            OptimizerKind::Sgd => 0,
            OptimizerKind::Adam => n_params,
        };
        Ok(Self {
            kind,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            first_moment: vec![0.0; moments],
            second_moment: vec![0.0; moments],
            step_count: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one update to `params` in place.
    pub fn step(&mut self, params: &mut ParameterVector, grad: &GradientVector) -> Result<()> {
        if params.len() != grad.len() {
            return Err(CoreError::Shape(format!(
                "{} parameters vs {} gradient entries",
                params.len(),
                grad.len()
            )));
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.values_mut().iter_mut().zip(grad.values()) {
                    *p -= lr * g;
                }
            }
            OptimizerKind::Adam => {
                if self.first_moment.len() != params.len() {
                    return Err(CoreError::Shape(format!(
                        "optimizer tracks {} moments, got {} parameters",
                        self.first_moment.len(),
                        params.len()
                    )));
                }
                let t = (self.step_count + 1) as i32;
                let c1 = 1.0 - self.beta1.powi(t);
                let c2 = 1.0 - self.beta2.powi(t);
                let (b1, b2, eps) = (self.beta1, self.beta2, self.epsilon);
                for (((p, g), m), v) in params
                    .values_mut()
                    .iter_mut()
                    .zip(grad.values())
                    .zip(&mut self.first_moment)
                    .zip(&mut self.second_moment)
                {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *p -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        self.step_count += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_one_step() {
        let mut opt = OptimizerState::sgd(0.1, 1).unwrap();
        let mut p = ParameterVector::new(vec![1.0]);
        opt.step(&mut p, &GradientVector::new(vec![2.0])).unwrap();
        assert!((p.values()[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        for mut opt in [
            OptimizerState::sgd(0.5, 3).unwrap(),
            OptimizerState::adam(0.5, 3).unwrap(),
        ] {
            let mut p = ParameterVector::new(vec![1.0, -2.0, 3.5]);
            let before = p.clone();
            for _ in 0..3 {
                opt.step(&mut p, &GradientVector::zeros(3)).unwrap();
            }
            assert_eq!(p, before);
        }
    }

    #[test]
    fn adam_first_step_moves_by_learning_rate() {
        // t = 1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut opt = OptimizerState::adam(1e-3, 1).unwrap();
        let mut p = ParameterVector::new(vec![0.0]);
        opt.step(&mut p, &GradientVector::new(vec![1.0])).unwrap();
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((p.values()[0] - expected).abs() < 1e-18);
    }

    #[test]
    fn mismatched_lengths_are_shape_errors() {
        let mut opt = OptimizerState::adam(1e-3, 2).unwrap();
        let mut p = ParameterVector::zeros(2);
        assert!(matches!(
            opt.step(&mut p, &GradientVector::zeros(3)),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn invalid_hyperparameters_rejected() {
        assert!(OptimizerState::sgd(0.0, 1).is_err());
        assert!(OptimizerState::new(OptimizerKind::Adam, 1e-3, 1.0, 0.9, 1e-8, 1).is_err());
        assert!(OptimizerState::new(OptimizerKind::Adam, 1e-3, 0.9, 0.9, 0.0, 1).is_err());
    }
}
