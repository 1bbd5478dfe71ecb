use ndarray::{Array1, Array2};
use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::qp;
use crate::datasets::Sample;
use crate::error::{CoreError, Result};
use crate::nn::{GradientVector, RegressionNet};
use crate::rng;
use crate::scenarios::Experience;

/// Feasibility tolerance on `<g~, g_k>` after projection.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryGroup {
    pub task_id: usize,
    pub samples: Vec<Sample>,
    #[serde(skip)]
    cache: Option<(Array2<f64>, Array1<f64>)>,
}

impl MemoryGroup {
    fn new(task_id: usize, samples: Vec<Sample>) -> Self {
        let cache = (!samples.is_empty()).then(|| {
            let dim = samples[0].features.len();
            let flat: Vec<f64> = samples
                .iter()
                .flat_map(|s| s.features.iter().copied())
                .collect();
            let x = Array2::from_shape_vec((samples.len(), dim), flat).expect("uniform rows");
            let y: Array1<f64> = samples.iter().map(|s| s.target).collect();
            (x, y)
        });
        Self {
            task_id,
            samples,
            cache,
        }
    }
}

/// Episodic memory: up to `ppe` train samples of each finished experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GemMemory {
    ppe: usize,
    margin: f64,
    groups: Vec<MemoryGroup>,
}

impl GemMemory {
    pub fn new(ppe: usize, margin: f64) -> Result<Self> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(CoreError::Config(format!(
                "GEM margin must be >= 0, got {margin}"
            )));
        }
        Ok(Self {
            ppe,
            margin,
            groups: Vec::new(),
        })
    }

    pub fn ppe(&self) -> usize {
        self.ppe
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn groups(&self) -> &[MemoryGroup] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|g| g.samples.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `min(ppe, |train|)` uniformly drawn train samples of `finished`.
    /// Earlier groups are left as they are. A zero `ppe` stores nothing.
    pub fn update(&mut self, finished: &Experience, seed: u64) {
        if self.ppe == 0 {
            return;
        }
        let pool = finished.train.samples();
        let mut r = rng::stream(seed, "gem-memory", finished.task_id as u64);
        let samples = if pool.len() <= self.ppe {
            pool.to_vec()
        } else {
            let mut picked = index::sample(&mut r, pool.len(), self.ppe).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|i| pool[i].clone()).collect()
        };
        self.groups
            .push(MemoryGroup::new(finished.task_id, samples));
    }
}

/// Loss gradient on each stored group at the current parameters.
pub fn gem_reference_gradients(
    net: &RegressionNet,
    memory: &GemMemory,
) -> Result<Vec<GradientVector>> {
    memory
        .groups
        .iter()
        .filter_map(|g| g.cache.as_ref())
        .map(|(x, y)| net.backward_batch(x.view(), y.view()).map(|(g, _)| g))
        .collect()
}

/// Projects `g` so that it no longer points against any memory gradient.
///
/// Returns `g` untouched when every `<g, g_k> >= -margin`. Otherwise returns the
/// closest vector to `g` with `<g~, g_k> >= 0` for all `k`.
pub fn gem_project(
    g: &GradientVector,
    memory_grads: &[GradientVector],
    margin: f64,
) -> Result<GradientVector> {
    if !g.is_finite() || memory_grads.iter().any(|m| !m.is_finite()) {
        return Err(CoreError::NonFinite(
            "GEM projection received a non-finite gradient".into(),
        ));
    }
    if let Some(m) = memory_grads.iter().find(|m| m.len() != g.len()) {
        return Err(CoreError::Shape(format!(
            "memory gradient has {} entries, current gradient {}",
            m.len(),
            g.len()
        )));
    }
    if memory_grads.iter().all(|m| g.dot(m) >= -margin) {
        return Ok(g.clone());
    }
    // All-zero memory gradients impose no constraint.
    let rows: Vec<&GradientVector> = memory_grads.iter().filter(|m| m.dot(m) > 0.0).collect();
    let gram: Vec<Vec<f64>> = rows
        .iter()
        .map(|a| rows.iter().map(|b| a.dot(b)).collect())
        .collect();
    let linear: Vec<f64> = rows.iter().map(|m| m.dot(g)).collect();
    let scale = g.dot(g).sqrt().max(1.0)
        * gram
            .iter()
            .enumerate()
            .map(|(i, r)| r[i].sqrt())
            .fold(0.0, f64::max);
    let v = qp::solve_nonneg_dual(&gram, &linear, 1e-3 * FEASIBILITY_TOL * scale.max(1e-300));

    let mut projected = g.values().to_vec();
    for (vk, row) in v.iter().zip(&rows) {
        if *vk != 0.0 {
            for (p, m) in projected.iter_mut().zip(row.values()) {
                *p += vk * m;
            }
        }
    }
    Ok(GradientVector::new(projected))
}
