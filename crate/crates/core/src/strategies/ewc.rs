use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{CoreError, Result};
use crate::nn::{fisher_diagonal, FisherDiagonal, GradientVector, ParameterVector, RegressionNet};

/// One quadratic anchor per finished experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EwcState {
    lambda: f64,
    anchors: Vec<(ParameterVector, FisherDiagonal)>,
}

impl EwcState {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0 && lambda.is_finite()) {
            return Err(CoreError::Config(format!(
                "EWC lambda must be >= 0, got {lambda}"
            )));
        }
        Ok(Self {
            lambda,
            anchors: Vec::new(),
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn anchors(&self) -> &[(ParameterVector, FisherDiagonal)] {
        &self.anchors
    }

    fn check(&self, params: &ParameterVector) -> Result<()> {
        for (theta_star, fisher) in &self.anchors {
            if theta_star.len() != params.len() || fisher.len() != params.len() {
                return Err(CoreError::Shape(format!(
                    "EWC anchor covers {} parameters, network has {}",
                    theta_star.len(),
                    params.len()
                )));
            }
        }
        Ok(())
    }
}

/// `sum over anchors of (lambda / 2) * sum_i F_i (theta_i - theta*_i)^2`.
pub fn ewc_penalty(params: &ParameterVector, state: &EwcState) -> Result<f64> {
    state.check(params)?;
    let mut total = 0.0;
    for (theta_star, fisher) in &state.anchors {
        let s: f64 = params
            .values()
            .iter()
            .zip(theta_star.values())
            .zip(fisher.values())
            .map(|((p, a), f)| f * (p - a) * (p - a))
            .sum();
        total += 0.5 * state.lambda * s;
    }
    Ok(total)
}

/// Adds `lambda * F_i (theta_i - theta*_i)` for every anchor to `grad`.
pub fn add_ewc_gradient(
    params: &ParameterVector,
    state: &EwcState,
    grad: &mut GradientVector,
) -> Result<()> {
    state.check(params)?;
    if grad.len() != params.len() {
        return Err(CoreError::Shape(
            "gradient and parameters differ in length".into(),
        ));
    }
    for (theta_star, fisher) in &state.anchors {
        for (((g, p), a), f) in grad
            .values_mut()
            .iter_mut()
            .zip(params.values())
            .zip(theta_star.values())
            .zip(fisher.values())
        {
            *g += state.lambda * f * (p - a);
        }
    }
    Ok(())
}

/// Anchors the current parameters with the Fisher diagonal of `train`.
pub fn ewc_consolidate(net: &RegressionNet, train: &Dataset, state: &mut EwcState) -> Result<()> {
    let fisher = fisher_diagonal(net, train.feature_matrix().view(), train.targets().view())?;
    state.anchors.push((net.parameters().clone(), fisher));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{Dataset, Sample};
    use crate::nn::{Activation, NetworkSpec};

    fn state(lambda: f64, anchor: Vec<f64>, fisher: Vec<f64>) -> EwcState {
        EwcState {
            lambda,
            anchors: vec![(ParameterVector::new(anchor), FisherDiagonal::new(fisher))],
        }
    }

    #[test]
    fn penalty_hand_values() {
        let s = state(4.0, vec![0.0], vec![2.0]);
        assert_eq!(
            ewc_penalty(&ParameterVector::new(vec![0.5]), &s).unwrap(),
            1.0
        );
        assert_eq!(
            ewc_penalty(&ParameterVector::new(vec![0.0]), &s).unwrap(),
            0.0
        );
        let zero = state(0.0, vec![0.0], vec![2.0]);
        assert_eq!(
            ewc_penalty(&ParameterVector::new(vec![3.0]), &zero).unwrap(),
            0.0
        );
    }

    #[test]
    fn penalty_gradient_matches_finite_differences() {
        let s = EwcState {
            lambda: 3.0,
            anchors: vec![
                (
                    ParameterVector::new(vec![0.1, -0.2, 0.3]),
                    FisherDiagonal::new(vec![1.0, 0.5, 2.0]),
                ),
                (
                    ParameterVector::new(vec![0.0, 0.4, -0.1]),
                    FisherDiagonal::new(vec![0.2, 0.0, 1.5]),
                ),
            ],
        };
        let p = ParameterVector::new(vec![0.7, 0.1, -0.5]);
        let mut g = GradientVector::zeros(3);
        add_ewc_gradient(&p, &s, &mut g).unwrap();
        let eps = 1e-5;
        for i in 0..3 {
            let mut plus = p.clone();
            plus.values_mut()[i] += eps;
            let mut minus = p.clone();
            minus.values_mut()[i] -= eps;
            let fd =
                (ewc_penalty(&plus, &s).unwrap() - ewc_penalty(&minus, &s).unwrap()) / (2.0 * eps);
            let exact = g.values()[i];
            assert!(
                (fd - exact).abs() <= 1e-5 * exact.abs().max(1e-8),
                "{fd} vs {exact}"
            );
        }
    }

    #[test]
    fn mismatched_anchor_is_a_shape_error() {
        let s = state(1.0, vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(
            ewc_penalty(&ParameterVector::zeros(3), &s),
            Err(CoreError::Shape(_))
        ));
        assert!(EwcState::new(-1.0).is_err());
    }

    fn linear_fit() -> (RegressionNet, Dataset) {
        let spec = NetworkSpec {
            input_dim: 1,
            hidden_layers: vec![],
            activation: Activation::Relu,
            residual: false,
        };
        let net =
            RegressionNet::from_parameters(spec, ParameterVector::new(vec![2.0, 1.0])).unwrap();
        let samples = (0..4)
            .map(|i| Sample {
                id: i,
                features: vec![i as f64],
                target: 2.0 * i as f64 + 1.0,
                category: None,
            })
            .collect();
        (net, Dataset::new("lin", vec!["x".into()], samples).unwrap())
    }

    #[test]
    fn consolidation_appends_anchors() {
        let (net, data) = linear_fit();
        let mut s = EwcState::new(10.0).unwrap();
        ewc_consolidate(&net, &data, &mut s).unwrap();
        assert_eq!(s.anchors().len(), 1);
        ewc_consolidate(&net, &data, &mut s).unwrap();
        assert_eq!(s.anchors()[0], s.anchors()[1]);
        // Perfect fit: zero Fisher, so the penalty vanishes anywhere.
        assert!(s.anchors()[0].1.values().iter().all(|&f| f == 0.0));
        assert_eq!(
            ewc_penalty(&ParameterVector::new(vec![-5.0, 9.0]), &s).unwrap(),
            0.0
        );
    }
}
