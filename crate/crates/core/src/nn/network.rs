use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{compute_loss, FisherDiagonal, GradientVector, NetworkSpec, ParameterVector};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
struct LayerSlot {
    fan_in: usize,
    fan_out: usize,
    weight_offset: usize,
    bias_offset: usize,
    skip: bool,
}

impl LayerSlot {
    fn weights<'a>(&self, flat: &'a [f64]) -> ArrayView2<'a, f64> {
        let end = self.weight_offset + self.fan_in * self.fan_out;
        ArrayView2::from_shape((self.fan_in, self.fan_out), &flat[self.weight_offset..end])
            .expect("layer layout is consistent")
    }

    fn bias<'a>(&self, flat: &'a [f64]) -> ArrayView1<'a, f64> {
        ArrayView1::from(&flat[self.bias_offset..self.bias_offset + self.fan_out])
    }
}

fn build_layout(spec: &NetworkSpec) -> Vec<LayerSlot> {
    let dims = spec.layer_dims();
    let n_hidden = dims.len() - 1;
    let mut offset = 0;
    dims.into_iter()
        .enumerate()
        .map(|(i, (fan_in, fan_out))| {
            let slot = LayerSlot {
                fan_in,
                fan_out,
                weight_offset: offset,
                bias_offset: offset + fan_in * fan_out,
                skip: spec.residual && i < n_hidden && fan_in == fan_out,
            };
            offset += fan_in * fan_out + fan_out;
            slot
        })
        .collect()
}

/// Scalar-output MLP over a flat parameter buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionNet {
    spec: NetworkSpec,
    layout: Vec<LayerSlot>,
    params: ParameterVector,
}

/// Per-layer values kept from the forward pass for backpropagation.
struct Trace {
    /// Input to each layer (the first entry is the feature batch).
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Array2<f64>>,
    output: Array1<f64>,
}

impl RegressionNet {
    /// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let layout = build_layout(&spec);
        let mut values = vec![0.0; spec.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for slot in &layout {
            let bound = 1.0 / (slot.fan_in as f64).sqrt();
            let end = slot.weight_offset + slot.fan_in * slot.fan_out;
            for w in &mut values[slot.weight_offset..end] {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(Self {
            spec,
            layout,
            params: ParameterVector::new(values),
        })
    }

    pub fn from_parameters(spec: NetworkSpec, params: ParameterVector) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(CoreError::Shape(format!(
                "parameter vector has {} entries, architecture needs {}",
                params.len(),
                spec.param_count()
            )));
        }
        if !params.is_finite() {
            return Err(CoreError::Argument(
                "parameter vector contains non-finite values".into(),
            ));
        }
        Ok(Self {
            layout: build_layout(&spec),
            spec,
            params,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn parameters(&self) -> &ParameterVector {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut ParameterVector {
        &mut self.params
    }

    pub fn set_parameters(&mut self, params: ParameterVector) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(CoreError::Shape(format!(
                "parameter vector has {} entries, network has {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params = params;
        Ok(())
    }

    fn check_features(&self, features: &ArrayView2<f64>) -> Result<()> {
        if features.ncols() != self.spec.input_dim {
            return Err(CoreError::Shape(format!(
                "feature rows have {} columns, network expects {}",
                features.ncols(),
                self.spec.input_dim
            )));
        }
        Ok(())
    }

    fn trace(&self, features: ArrayView2<f64>) -> Result<Trace> {
        self.check_features(&features)?;
        let act = self.spec.activation;
        let flat = self.params.values();
        let n_hidden = self.layout.len() - 1;
        let mut inputs = Vec::with_capacity(self.layout.len());
        let mut pre = Vec::with_capacity(n_hidden);
        let mut a = features.to_owned();
        for (idx, slot) in self.layout[..n_hidden].iter().enumerate() {
            let z = a.dot(&slot.weights(flat)) + slot.bias(flat);
            if z.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Numeric {
                    layer: idx,
                    message: "non-finite pre-activation".into(),
                });
            }
            let mut h = z.mapv(|v| act.apply(v));
            if slot.skip {
                h += &a;
            }
            inputs.push(a);
            pre.push(z);
            a = h;
        }
        let out_slot = &self.layout[n_hidden];
        let out = a.dot(&out_slot.weights(flat)) + out_slot.bias(flat);
        let output = out.index_axis_move(Axis(1), 0);
        if output.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numeric {
                layer: n_hidden,
                message: "non-finite prediction".into(),
            });
        }
        inputs.push(a);
        Ok(Trace {
            inputs,
            pre,
            output,
        })
    }

    /// Predictions for a batch of feature rows.
    pub fn forward_batch(&self, features: ArrayView2<f64>) -> Result<Array1<f64>> {
        Ok(self.trace(features)?.output)
    }

    /// Exact gradient of the batch-mean squared error, and that loss.
    pub fn backward_batch(
        &self,
        features: ArrayView2<f64>,
        targets: ArrayView1<f64>,
    ) -> Result<(GradientVector, f64)> {
        if features.nrows() != targets.len() {
            return Err(CoreError::Shape(format!(
                "{} feature rows vs {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if targets.is_empty() {
            return Err(CoreError::Argument(
                "backward pass over an empty batch".into(),
            ));
        }
        let trace = self.trace(features)?;
        let n = targets.len() as f64;
        let loss = compute_loss(
            trace.output.as_slice().expect("contiguous"),
            &targets.to_vec(),
        )?;

        let flat = self.params.values();
        let mut grad = vec![0.0; self.params.len()];
        let act = self.spec.activation;

        // d(loss)/d(output of the current layer), one column per unit.
        let mut upstream: Array2<f64> = (&trace.output - &targets)
            .mapv(|r| 2.0 * r / n)
            .insert_axis(Axis(1));

        for (idx, slot) in self.layout.iter().enumerate().rev() {
            let is_output = idx + 1 == self.layout.len();
            let dz = if is_output {
                upstream.clone()
            } else {
                let z = &trace.pre[idx];
                let mut dz = upstream.clone();
                dz.zip_mut_with(z, |d, &zv| *d *= act.derivative(zv));
                dz
            };
            let input = &trace.inputs[idx];
            {
                let end = slot.weight_offset + slot.fan_in * slot.fan_out;
                let mut gw = ArrayViewMut2::from_shape(
                    (slot.fan_in, slot.fan_out),
                    &mut grad[slot.weight_offset..end],
                )
                .expect("layer layout is consistent");
                gw.assign(&input.t().dot(&dz));
            }
            let gb = dz.sum_axis(Axis(0));
            grad[slot.bias_offset..slot.bias_offset + slot.fan_out]
                .copy_from_slice(gb.as_slice().expect("contiguous"));
            if idx > 0 {
                let mut next = dz.dot(&slot.weights(flat).t());
                if slot.skip {
                    next += &upstream;
                }
                upstream = next;
            }
            if grad[slot.weight_offset..slot.bias_offset + slot.fan_out]
                .iter()
                .any(|v| !v.is_finite())
            {
                return Err(CoreError::Numeric {
                    layer: idx,
                    message: "non-finite gradient".into(),
                });
            }
        }
        Ok((GradientVector::new(grad), loss))
    }

    /// Batch-mean squared error at the current parameters.
    pub fn loss(&self, features: ArrayView2<f64>, targets: ArrayView1<f64>) -> Result<f64> {
        let preds = self.forward_batch(features)?;
        compute_loss(preds.as_slice().expect("contiguous"), &targets.to_vec())
    }
}

/// Central-difference gradient of the batch-mean squared error.
pub fn finite_diff_gradient(
    net: &RegressionNet,
    features: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    eps: f64,
) -> Result<GradientVector> {
    if eps.is_nan() || eps <= 0.0 {
        return Err(CoreError::Argument(format!(
            "step size must be positive, got {eps}"
        )));
    }
    let mut probe = net.clone();
    let mut grad = vec![0.0; net.param_count()];
    for (i, g) in grad.iter_mut().enumerate() {
        let original = net.params.values()[i];
        probe.params.values_mut()[i] = original + eps;
        let plus = probe.loss(features, targets)?;
        probe.params.values_mut()[i] = original - eps;
        let minus = probe.loss(features, targets)?;
        probe.params.values_mut()[i] = original;
        *g = (plus - minus) / (2.0 * eps);
    }
    Ok(GradientVector::new(grad))
}

/// Empirical Fisher diagonal: mean over samples of the squared per-sample loss gradient.
pub fn fisher_diagonal(
    net: &RegressionNet,
    features: ArrayView2<f64>,
    targets: ArrayView1<f64>,
) -> Result<FisherDiagonal> {
    if targets.is_empty() {
        return Err(CoreError::Argument(
            "Fisher estimate over an empty dataset".into(),
        ));
    }
    let mut acc = vec![0.0; net.param_count()];
    for i in 0..targets.len() {
        let row = features.slice(ndarray::s![i..i + 1, ..]);
        let target = targets.slice(ndarray::s![i..i + 1]);
        let (g, _) = net.backward_batch(row, target)?;
        for (a, v) in acc.iter_mut().zip(g.values()) {
            *a += v * v;
        }
    }
    let n = targets.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(FisherDiagonal::new(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Activation;
    use ndarray::{array, Array};

    fn linear_spec(input_dim: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_layers: vec![],
            activation: Activation::Relu,
            residual: false,
        }
    }

    fn max_rel_err(a: &GradientVector, b: &GradientVector) -> f64 {
        a.values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let spec = NetworkSpec {
            input_dim: 2,
            hidden_layers: vec![4],
            activation: Activation::Relu,
            residual: false,
        };
        let a = RegressionNet::init(spec.clone(), 7).unwrap();
        let b = RegressionNet::init(spec.clone(), 7).unwrap();
        let c = RegressionNet::init(spec, 8).unwrap();
        assert_eq!(a.parameters(), b.parameters());
        assert_ne!(a.parameters(), c.parameters());
    }

    #[test]
    fn init_biases_zero_and_weights_bounded() {
        let spec = NetworkSpec {
            input_dim: 3,
            hidden_layers: vec![5, 5],
            activation: Activation::Tanh,
            residual: false,
        };
        let net = RegressionNet::init(spec, 1).unwrap();
        assert_eq!(net.param_count(), 56);
        for slot in &net.layout {
            let bound = 1.0 / (slot.fan_in as f64).sqrt();
            assert!(slot
                .weights(net.params.values())
                .iter()
                .all(|w| w.abs() <= bound));
            assert!(slot.bias(net.params.values()).iter().all(|&b| b == 0.0));
        }
    }

    #[test]
    fn zero_network_predicts_zero() {
        let spec = NetworkSpec::mlp(3);
        let net = RegressionNet::from_parameters(
            spec.clone(),
            ParameterVector::zeros(spec.param_count()),
        )
        .unwrap();
        let out = net
            .forward_batch(array![[1.0, -2.0, 3.0], [0.5, 0.5, 0.5]].view())
            .unwrap();
        assert_eq!(out.to_vec(), vec![0.0, 0.0]);
    }

    #[test]
    fn linear_net_hand_evaluation() {
        let net = RegressionNet::from_parameters(
            linear_spec(2),
            ParameterVector::new(vec![2.0, -1.0, 0.5]),
        )
        .unwrap();
        let out = net.forward_batch(array![[1.0, 3.0]].view()).unwrap();
        assert_eq!(out[0], -0.5);
    }

    #[test]
    fn identical_rows_give_identical_predictions() {
        let net = RegressionNet::init(NetworkSpec::mlp(4), 3).unwrap();
        let x = Array::from_shape_fn((5, 4), |(_, j)| j as f64 * 0.3 - 0.2);
        let out = net.forward_batch(x.view()).unwrap();
        assert!(out.iter().all(|&v| v == out[0]));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let net = RegressionNet::init(NetworkSpec::mlp(4), 3).unwrap();
        assert!(matches!(
            net.forward_batch(Array2::zeros((2, 3)).view()),
            Err(CoreError::Shape(_))
        ));
    }

    #[test]
    fn exact_fit_gives_zero_gradient() {
        let net = RegressionNet::from_parameters(
            linear_spec(2),
            ParameterVector::new(vec![2.0, -1.0, 0.5]),
        )
        .unwrap();
        let x = array![[1.0, 3.0], [0.0, 1.0], [2.0, 2.0]];
        let y = net.forward_batch(x.view()).unwrap();
        let (g, loss) = net.backward_batch(x.view(), y.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values().iter().all(|&v| v == 0.0));
        let fd = finite_diff_gradient(&net, x.view(), y.view(), 1e-4).unwrap();
        assert!(fd.values().iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn linear_net_matches_central_differences_tightly() {
        let net = RegressionNet::from_parameters(
            linear_spec(3),
            ParameterVector::new(vec![0.3, -0.7, 1.1, 0.2]),
        )
        .unwrap();
        let x = array![[1.0, 2.0, -1.0], [0.5, -0.3, 0.8], [-1.2, 0.4, 0.0]];
        let y = array![0.1, -0.4, 2.0];
        let (g, _) = net.backward_batch(x.view(), y.view()).unwrap();
        let fd = finite_diff_gradient(&net, x.view(), y.view(), 1e-4).unwrap();
        for (a, b) in g.values().iter().zip(fd.values()) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn residual_tanh_net_matches_central_differences() {
        let spec = NetworkSpec {
            input_dim: 4,
            hidden_layers: vec![4, 6, 6],
            activation: Activation::Tanh,
            residual: true,
        };
        let net = RegressionNet::init(spec, 11).unwrap();
        let x = Array::from_shape_fn((6, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 * 0.4 - 0.8);
        let y = Array::from_shape_fn(6, |i| i as f64 * 0.25 - 0.5);
        let (g, _) = net.backward_batch(x.view(), y.view()).unwrap();
        let fd = finite_diff_gradient(&net, x.view(), y.view(), 1e-5).unwrap();
        assert!(max_rel_err(&g, &fd) < 1e-4);
    }

    #[test]
    fn duplicated_batch_gives_same_gradient() {
        let net = RegressionNet::init(NetworkSpec::mlp(3), 5).unwrap();
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.5, 2.0]];
        let y = array![1.0, -1.0];
        let x2 = ndarray::concatenate(Axis(0), &[x.view(), x.view()]).unwrap();
        let y2 = ndarray::concatenate(Axis(0), &[y.view(), y.view()]).unwrap();
        let (g1, l1) = net.backward_batch(x.view(), y.view()).unwrap();
        let (g2, l2) = net.backward_batch(x2.view(), y2.view()).unwrap();
        assert!((l1 - l2).abs() < 1e-15);
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
        }
    }

    #[test]
    fn finite_difference_error_shrinks_then_plateaus() {
        let spec = NetworkSpec {
            input_dim: 3,
            hidden_layers: vec![5],
            activation: Activation::Tanh,
            residual: false,
        };
        let net = RegressionNet::init(spec, 2).unwrap();
        let x = array![[0.3, -0.2, 0.9], [1.1, 0.4, -0.6], [-0.5, 0.8, 0.1]];
        let y = array![0.5, -0.2, 1.0];
        let (g, _) = net.backward_batch(x.view(), y.view()).unwrap();
        let errs: Vec<f64> = [1e-2, 1e-3, 1e-4, 1e-5]
            .iter()
            .map(|&eps| {
                let fd = finite_diff_gradient(&net, x.view(), y.view(), eps).unwrap();
                g.values()
                    .iter()
                    .zip(fd.values())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        assert!(errs[1] < errs[0]);
        assert!(errs[2] < errs[1]);
        // Truncation error is gone; rounding noise dominates from here on.
        assert!(errs[3] < 1e-8);
        assert!(matches!(
            finite_diff_gradient(&net, x.view(), y.view(), 0.0),
            Err(CoreError::Argument(_))
        ));
    }

    #[test]
    fn non_finite_inputs_report_layer() {
        let net = RegressionNet::init(NetworkSpec::mlp(2), 0).unwrap();
        let x = array![[f64::NAN, 1.0]];
        let err = net
            .backward_batch(x.view(), array![1.0].view())
            .unwrap_err();
        assert!(matches!(err, CoreError::Numeric { layer: 0, .. }));
    }

    #[test]
    fn fisher_examples() {
        let net = RegressionNet::from_parameters(
            linear_spec(2),
            ParameterVector::new(vec![1.0, 2.0, 0.0]),
        )
        .unwrap();
        let x = array![[1.0, 0.0], [0.0, 2.0]];
        // Predictions 1 and 4. Per-sample gradient of (p - y)^2 is 2 (p - y) [x, 1].
        let y = array![0.0, 3.0];
        let f = fisher_diagonal(&net, x.view(), y.view()).unwrap();
        // sample 0: 2*[1,0,1] = [2,0,2]; sample 1: 2*[0,2,1] = [0,4,2]
        assert_eq!(
            f.values(),
            &[(4.0 + 0.0) / 2.0, (0.0 + 16.0) / 2.0, (4.0 + 4.0) / 2.0]
        );

        let single = fisher_diagonal(
            &net,
            x.slice(ndarray::s![0..1, ..]),
            y.slice(ndarray::s![0..1]),
        )
        .unwrap();
        assert_eq!(single.values(), &[4.0, 0.0, 4.0]);

        let exact = net.forward_batch(x.view()).unwrap();
        let zero = fisher_diagonal(&net, x.view(), exact.view()).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        assert!(
            fisher_diagonal(&net, Array2::zeros((0, 2)).view(), Array1::zeros(0).view()).is_err()
        );
    }

    #[test]
    fn parameter_round_trip_is_bit_identical() {
        let net = RegressionNet::init(NetworkSpec::mlp(3), 9).unwrap();
        let x = array![[0.2, 0.4, -0.1]];
        let rebuilt =
            RegressionNet::from_parameters(net.spec().clone(), net.parameters().clone()).unwrap();
        assert_eq!(
            net.forward_batch(x.view()).unwrap(),
            rebuilt.forward_batch(x.view()).unwrap()
        );
    }
}
