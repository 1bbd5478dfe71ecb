//! Training an MLP over an experience stream under one of five strategies.
//!
//! All strategies share one loop: for every experience, build the effective
//! training set, run minibatch epochs (with a strategy hook on each gradient),
//! let the strategy update its memory, then evaluate on every experience seen
//! so far. Random draws for minibatch order, replay sampling and episodic
//! memory come from separate seeded streams, so a strategy that stores
//! nothing follows the naive trajectory bit for bit.

mod ewc;
mod gem;
pub mod qp;
mod replay;

pub use ewc::{add_ewc_gradient, ewc_consolidate, ewc_penalty, EwcState};
pub use gem::{gem_project, gem_reference_gradients, GemMemory, MemoryGroup, FEASIBILITY_TOL};
pub use replay::{effective_train_set_replay, ReplayBuffer};

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::datasets::Dataset;
use crate::error::{CoreError, Result};
use crate::metrics::{self, EvalMatrix};
use crate::nn::{Activation, NetworkSpec, OptimizerKind, OptimizerState, RegressionNet};
use crate::rng;
use crate::scenarios::{Experience, ExperienceStream};

/// Largest share of the stream's training data a replay buffer may hold.
pub const REPLAY_BUDGET_FRACTION: f64 = 0.20;
pub const DEFAULT_EWC_LAMBDA: f64 = 100.0;
pub const DEFAULT_GEM_PPE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Naive,
    Joint,
    Replay,
    Ewc,
    Gem,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 5] = [
        StrategyKind::Naive,
        StrategyKind::Joint,
        StrategyKind::Replay,
        StrategyKind::Ewc,
        StrategyKind::Gem,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Naive => "naive",
            StrategyKind::Joint => "joint",
            StrategyKind::Replay => "replay",
            StrategyKind::Ewc => "ewc",
            StrategyKind::Gem => "gem",
        }
    }

    /// Parameters with the default settings of this strategy.
    pub fn default_params(self) -> StrategyParams {
        match self {
            StrategyKind::Naive => StrategyParams::Naive,
            StrategyKind::Joint => StrategyParams::Joint,
            StrategyKind::Replay => StrategyParams::Replay { budget: None },
            StrategyKind::Ewc => StrategyParams::Ewc {
                lambda: DEFAULT_EWC_LAMBDA,
            },
            StrategyKind::Gem => StrategyParams::Gem {
                ppe: DEFAULT_GEM_PPE,
                margin: 0.0,
            },
        }
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CoreError::Config(format!("unknown strategy `{s}`")))
    }
}

/// Strategy selection plus its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyParams {
    Naive,
    Joint,
    Replay {
        /// Absolute sample cap; defaults to 20% of the stream's training data.
        #[serde(default)]
        budget: Option<usize>,
    },
    Ewc {
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Gem {
        /// Patterns stored per experience. Zero disables the memory.
        #[serde(default = "default_ppe")]
        ppe: usize,
        #[serde(default)]
        margin: f64,
    },
}

fn default_lambda() -> f64 {
    DEFAULT_EWC_LAMBDA
}

fn default_ppe() -> usize {
    DEFAULT_GEM_PPE
}

impl StrategyParams {
    pub fn kind(&self) -> StrategyKind {
        match self {
            StrategyParams::Naive => StrategyKind::Naive,
            StrategyParams::Joint => StrategyKind::Joint,
            StrategyParams::Replay { .. } => StrategyKind::Replay,
            StrategyParams::Ewc { .. } => StrategyKind::Ewc,
            StrategyParams::Gem { .. } => StrategyKind::Gem,
        }
    }
}

/// Largest replay buffer allowed for a stream.
pub fn replay_budget_ceiling(total_train_size: usize) -> usize {
    (REPLAY_BUDGET_FRACTION * total_train_size as f64).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_per_experience: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    #[serde(default = "default_hidden")]
    pub hidden_layers: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub residual: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64, 64]
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs_per_experience: 30,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            hidden_layers: default_hidden(),
            activation: Activation::Relu,
            residual: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs_per_experience == 0 || self.batch_size == 0 {
            return Err(CoreError::Config(
                "epochs_per_experience and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(CoreError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.network_spec(1).validate()
    }

    pub fn network_spec(&self, input_dim: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_layers: self.hidden_layers.clone(),
            activation: self.activation,
            residual: self.residual,
        }
    }
}

/// Outcome of one strategy on one stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub strategy: StrategyKind,
    pub params: StrategyParams,
    pub eval_matrix: EvalMatrix,
    /// MAE over the union of all test sets after the last experience.
    pub final_test_mae: Option<f64>,
    pub final_test_mpe: Option<f64>,
    /// Final-model percent error on each experience's test set.
    pub final_experience_mpe: Vec<f64>,
    pub wall_clock_seconds: f64,
    pub seed: u64,
    pub config: TrainConfig,
    /// Samples held by the strategy's memory after each experience.
    pub stored_samples: Vec<usize>,
    /// Set when training diverged; the matrix then holds the rows completed before it.
    pub error: Option<String>,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.error.is_none() && self.eval_matrix.is_complete()
    }
}

pub fn effective_train_set_naive(experience: &Experience) -> Dataset {
    experience.train.clone()
}

/// Union of the train sets of experiences `0..=k`.
pub fn effective_train_set_joint(stream: &ExperienceStream, k: usize) -> Result<Dataset> {
    if k >= stream.len() {
        return Err(CoreError::Argument(format!(
            "experience {k} is outside a stream of {}",
            stream.len()
        )));
    }
    Dataset::concat(
        format!("joint/0..={k}"),
        stream.experiences()[..=k].iter().map(|e| &e.train),
    )
}

enum StrategyState {
    Naive,
    Joint,
    Replay(ReplayBuffer),
    Ewc(EwcState),
    Gem(GemMemory),
}

impl StrategyState {
    fn new(params: &StrategyParams, stream: &ExperienceStream) -> Result<Self> {
        Ok(match params {
            StrategyParams::Naive => StrategyState::Naive,
            StrategyParams::Joint => StrategyState::Joint,
            StrategyParams::Replay { budget } => {
                let ceiling = replay_budget_ceiling(stream.total_train_size());
                let budget = budget.unwrap_or(ceiling);
                if budget > ceiling {
                    return Err(CoreError::Config(format!(
                        "replay budget {budget} exceeds the storage ceiling of {ceiling} samples"
                    )));
                }
                StrategyState::Replay(ReplayBuffer::new(budget))
            }
            StrategyParams::Ewc { lambda } => StrategyState::Ewc(EwcState::new(*lambda)?),
            StrategyParams::Gem { ppe, margin } => {
                StrategyState::Gem(GemMemory::new(*ppe, *margin)?)
            }
        })
    }

    fn training_set(&self, stream: &ExperienceStream, k: usize) -> Result<Dataset> {
        let exp = &stream.experiences()[k];
        match self {
            StrategyState::Joint => effective_train_set_joint(stream, k),
            StrategyState::Replay(buffer) => effective_train_set_replay(exp, buffer),
            _ => Ok(effective_train_set_naive(exp)),
        }
    }

    fn adjust_gradient(
        &self,
        net: &RegressionNet,
        grad: &mut crate::nn::GradientVector,
    ) -> Result<()> {
        match self {
            StrategyState::Ewc(state) => add_ewc_gradient(net.parameters(), state, grad),
            StrategyState::Gem(memory) if !memory.groups().is_empty() => {
                let refs = gem_reference_gradients(net, memory)?;
                *grad = gem_project(grad, &refs, memory.margin())?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn finish_experience(
        &mut self,
        net: &RegressionNet,
        exp: &Experience,
        seed: u64,
    ) -> Result<()> {
        match self {
            StrategyState::Replay(buffer) => buffer.update(exp, seed),
            StrategyState::Ewc(state) => ewc_consolidate(net, &exp.train, state)?,
            StrategyState::Gem(memory) => memory.update(exp, seed),
            StrategyState::Naive | StrategyState::Joint => {}
        }
        Ok(())
    }

    fn stored(&self) -> usize {
        match self {
            StrategyState::Replay(buffer) => buffer.len(),
            StrategyState::Gem(memory) => memory.len(),
            _ => 0,
        }
    }
}

struct Split {
    x: Array2<f64>,
    y: Array1<f64>,
}

impl Split {
    fn of(d: &Dataset) -> Self {
        Self {
            x: d.feature_matrix(),
            y: d.targets(),
        }
    }
}

fn minibatch_epoch(
    net: &mut RegressionNet,
    opt: &mut OptimizerState,
    state: &StrategyState,
    data: &Split,
    batch_size: usize,
    order_rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<()> {
    let mut order: Vec<usize> = (0..data.y.len()).collect();
    order.shuffle(order_rng);
    for batch in order.chunks(batch_size) {
        let xb = data.x.select(Axis(0), batch);
        let yb = data.y.select(Axis(0), batch);
        let (mut grad, loss) = net.backward_batch(xb.view(), yb.view())?;
        if !loss.is_finite() {
            return Err(CoreError::NonFinite(format!("training loss became {loss}")));
        }
        state.adjust_gradient(net, &mut grad)?;
        opt.step(net.parameters_mut(), &grad)?;
        if !net.parameters().is_finite() {
            return Err(CoreError::NonFinite("parameters diverged".into()));
        }
    }
    Ok(())
}

/// Trains through the stream and also hands back the final model
/// (absent if training diverged).
pub fn train_stream_with_model(
    stream: &ExperienceStream,
    params: &StrategyParams,
    config: &TrainConfig,
) -> Result<(RunResult, Option<RegressionNet>)> {
    config.validate()?;
    let mut state = StrategyState::new(params, stream)?;
    let spec = config.network_spec(stream.feature_dim());
    let tests: Vec<Split> = stream
        .experiences()
        .iter()
        .map(|e| Split::of(&e.test))
        .collect();

    let started = Instant::now();
    let mut net = RegressionNet::init(spec, rng::derive_seed(config.seed, "init", 0))?;
    let mut opt = OptimizerState::new(
        config.optimizer,
        config.learning_rate,
        0.9,
        0.999,
        1e-8,
        net.param_count(),
    )?;
    let mut order_rng = rng::stream(config.seed, "minibatch", 0);
    let memory_seed = rng::derive_seed(config.seed, "memory", 0);
    let mut matrix = EvalMatrix::new(stream.len());
    let mut stored = Vec::with_capacity(stream.len());

    let mut trained = || -> Result<()> {
        for (k, exp) in stream.experiences().iter().enumerate() {
            let data = Split::of(&state.training_set(stream, k)?);
            for _ in 0..config.epochs_per_experience {
                minibatch_epoch(
                    &mut net,
                    &mut opt,
                    &state,
                    &data,
                    config.batch_size,
                    &mut order_rng,
                )?;
            }
            state.finish_experience(&net, exp, memory_seed)?;
            stored.push(state.stored());
            let row = tests[..=k]
                .iter()
                .map(|t| {
                    let preds = net.forward_batch(t.x.view())?;
                    metrics::mae(
                        preds.as_slice().expect("contiguous"),
                        t.y.as_slice().expect("contiguous"),
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            matrix.push_row(row)?;
        }
        Ok(())
    };
    let outcome = trained();

    let (error, model, final_mae, final_mpe, per_exp_mpe) = match outcome {
        Ok(()) => {
            let mut all_preds = Vec::new();
            let mut all_targets = Vec::new();
            let mut per_exp = Vec::with_capacity(tests.len());
            for t in &tests {
                let preds = net.forward_batch(t.x.view())?;
                let targets = t.y.as_slice().expect("contiguous");
                per_exp.push(
                    metrics::mpe(preds.as_slice().expect("contiguous"), targets)
                        .unwrap_or(f64::NAN),
                );
                all_preds.extend(preds.iter().copied());
                all_targets.extend_from_slice(targets);
            }
            let mae = metrics::mae(&all_preds, &all_targets)?;
            let mpe = metrics::mpe(&all_preds, &all_targets).ok();
            let per_exp = if per_exp.iter().all(|v| v.is_finite()) {
                per_exp
            } else {
                Vec::new()
            };
            (None, Some(net), Some(mae), mpe, per_exp)
        }
        Err(e @ (CoreError::NonFinite(_) | CoreError::Numeric { .. })) => {
            (Some(e.to_string()), None, None, None, Vec::new())
        }
        Err(e) => return Err(e),
    };
    let wall_clock_seconds = started.elapsed().as_secs_f64();

    Ok((
        RunResult {
            strategy: params.kind(),
            params: params.clone(),
            eval_matrix: matrix,
            final_test_mae: final_mae,
            final_test_mpe: final_mpe,
            final_experience_mpe: per_exp_mpe,
            wall_clock_seconds,
            seed: config.seed,
            config: config.clone(),
            stored_samples: stored,
            error,
        },
        model,
    ))
}

/// Trains one strategy through the stream, evaluating after every experience.
///
/// Configuration problems are returned as errors; numeric divergence is
/// recorded in the result.
pub fn train_stream(
    stream: &ExperienceStream,
    params: &StrategyParams,
    config: &TrainConfig,
) -> Result<RunResult> {
    train_stream_with_model(stream, params, config).map(|(r, _)| r)
}
