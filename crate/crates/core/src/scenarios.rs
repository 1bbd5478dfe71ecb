//! Turning a dataset into an ordered stream of experiences.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::datasets::{split_train_test, Dataset, NormStats, Sample};
use crate::error::{CoreError, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    BinIncremental,
    InputIncremental,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BinMode {
    /// Equal-count groups of the target-sorted samples.
    #[default]
    Quantile,
    /// Equal-length target intervals; the last one is closed on the right.
    EqualWidth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Experience {
    pub task_id: usize,
    pub train: Dataset,
    pub test: Dataset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperienceStream {
    experiences: Vec<Experience>,
    scenario: ScenarioKind,
    provenance: String,
}

impl ExperienceStream {
    /// Checks task ids against positions and sample ids for disjointness.
    ///
    /// Scenario builders always produce at least two experiences; a
    /// single-experience stream is accepted here so that degenerate runs can
    /// be expressed directly.
    pub fn new(
        experiences: Vec<Experience>,
        scenario: ScenarioKind,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if experiences.is_empty() {
            return Err(CoreError::Scenario(
                "a stream needs at least one experience".into(),
            ));
        }
        let mut seen = HashSet::new();
        for (pos, exp) in experiences.iter().enumerate() {
            if exp.task_id != pos {
                return Err(CoreError::Scenario(format!(
                    "experience at position {pos} carries task id {}",
                    exp.task_id
                )));
            }
            if exp.train.feature_names() != experiences[0].train.feature_names()
                || exp.test.feature_names() != experiences[0].train.feature_names()
            {
                return Err(CoreError::Scenario(format!(
                    "experience {pos} has a different feature layout"
                )));
            }
            for id in exp.train.ids().into_iter().chain(exp.test.ids()) {
                if !seen.insert(id) {
                    return Err(CoreError::Scenario(format!(
                        "sample {id} appears more than once in the stream"
                    )));
                }
            }
        }
        Ok(Self {
            experiences,
            scenario,
            provenance: provenance.into(),
        })
    }

    pub fn experiences(&self) -> &[Experience] {
        &self.experiences
    }

    pub fn len(&self) -> usize {
        self.experiences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.experiences.is_empty()
    }

    pub fn scenario(&self) -> ScenarioKind {
        self.scenario
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn feature_dim(&self) -> usize {
        self.experiences[0].train.feature_dim()
    }

    pub fn total_train_size(&self) -> usize {
        self.experiences.iter().map(|e| e.train.len()).sum()
    }

    /// Every test sample in the stream, in experience order.
    pub fn all_test(&self) -> Result<Dataset> {
        Dataset::concat("all/test", self.experiences.iter().map(|e| &e.test))
    }

    /// Z-scores every experience with statistics fitted on the union of all train sets.
    pub fn normalized(&self) -> Result<(Self, NormStats)> {
        let all_train = Dataset::concat("all/train", self.experiences.iter().map(|e| &e.train))?;
        let stats = NormStats::fit(&all_train);
        let experiences = self
            .experiences
            .iter()
            .map(|e| {
                Ok(Experience {
                    task_id: e.task_id,
                    train: stats.apply(&e.train)?,
                    test: stats.apply(&e.test)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((
            Self {
                experiences,
                scenario: self.scenario,
                provenance: self.provenance.clone(),
            },
            stats,
        ))
    }
}

/// Groups samples into target bins, lowest targets first. Samples are sorted by
/// target with ties broken by ascending id.
pub fn partition_by_target(
    dataset: &Dataset,
    n_bins: usize,
    mode: BinMode,
) -> Result<Vec<Vec<Sample>>> {
    if n_bins < 2 {
        return Err(CoreError::Scenario(format!(
            "need at least 2 bins, got {n_bins}"
        )));
    }
    if dataset.len() < n_bins {
        return Err(CoreError::Scenario(format!(
            "{} samples cannot fill {n_bins} bins",
            dataset.len()
        )));
    }
    let mut sorted = dataset.samples().to_vec();
    sorted.sort_by(|a, b| a.target.total_cmp(&b.target).then(a.id.cmp(&b.id)));

    let bins: Vec<Vec<Sample>> = match mode {
        BinMode::Quantile => {
            let base = sorted.len() / n_bins;
            let extra = sorted.len() % n_bins;
            let mut rest = sorted.into_iter();
            (0..n_bins)
                .map(|b| rest.by_ref().take(base + usize::from(b < extra)).collect())
                .collect()
        }
        BinMode::EqualWidth => {
            let lo = sorted[0].target;
            let hi = sorted[sorted.len() - 1].target;
            let width = (hi - lo) / n_bins as f64;
            let inner_edges: Vec<f64> = (1..n_bins).map(|i| lo + width * i as f64).collect();
            let mut bins = vec![Vec::new(); n_bins];
            for s in sorted {
                let b = inner_edges.iter().filter(|&&e| s.target >= e).count();
                bins[b].push(s);
            }
            bins
        }
    };
    if let Some((b, bin)) = bins.iter().enumerate().find(|(_, bin)| bin.len() < 2) {
        return Err(CoreError::Scenario(format!(
            "bin {b} holds {} sample(s); every bin needs at least 2",
            bin.len()
        )));
    }
    Ok(bins)
}

fn split_experience(
    source: &Dataset,
    samples: Vec<Sample>,
    label: &str,
    task_id: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<Experience> {
    let subset = source.with_samples(format!("{}/{label}", source.name()), samples)?;
    let (train, test) = split_train_test(
        &subset,
        test_fraction,
        rng::derive_seed(seed, "experience-split", task_id as u64),
    )
    .map_err(|e| CoreError::Scenario(format!("experience {task_id} ({label}): {e}")))?;
    Ok(Experience {
        task_id,
        train,
        test,
    })
}

/// One experience per target bin, in ascending target order; each bin is split
/// into train and test on its own.
pub fn build_bin_incremental(
    dataset: &Dataset,
    n_bins: usize,
    mode: BinMode,
    test_fraction: f64,
    seed: u64,
) -> Result<ExperienceStream> {
    if n_bins < 2 {
        return Err(CoreError::Scenario(format!(
            "a stream needs at least 2 experiences, got {n_bins} bin(s)"
        )));
    }
    if dataset.len() < 5 * n_bins {
        return Err(CoreError::Scenario(format!(
            "{} samples are too few for {n_bins} bins (need at least {})",
            dataset.len(),
            5 * n_bins
        )));
    }
    let bins = partition_by_target(dataset, n_bins, mode)?;
    let experiences = bins
        .into_iter()
        .enumerate()
        .map(|(b, samples)| {
            split_experience(dataset, samples, &format!("bin{b}"), b, test_fraction, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    let mode_name = match mode {
        BinMode::Quantile => "quantile",
        BinMode::EqualWidth => "equal_width",
    };
    ExperienceStream::new(
        experiences,
        ScenarioKind::BinIncremental,
        format!("{n_bins} {mode_name} target bins, test fraction {test_fraction}, seed {seed}"),
    )
}

/// One experience per category label, in the given order.
pub fn build_input_incremental(
    dataset: &Dataset,
    category_order: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<ExperienceStream> {
    if let Some(s) = dataset.samples().iter().find(|s| s.category.is_none()) {
        return Err(CoreError::Scenario(format!(
            "sample {} has no category",
            s.id
        )));
    }
    let mut order_set = HashSet::new();
    for label in category_order {
        if !order_set.insert(label.as_str()) {
            return Err(CoreError::Scenario(format!("label `{label}` listed twice")));
        }
    }
    let present = dataset.categories();
    if let Some(label) = present.iter().find(|l| !order_set.contains(l.as_str())) {
        return Err(CoreError::Scenario(format!(
            "label `{label}` is missing from the category order"
        )));
    }
    if let Some(label) = category_order.iter().find(|l| !present.contains(l)) {
        return Err(CoreError::Scenario(format!(
            "label `{label}` does not occur in the data"
        )));
    }
    if category_order.len() < 2 {
        return Err(CoreError::Scenario(format!(
            "a stream needs at least 2 experiences, data has {} category",
            category_order.len()
        )));
    }
    let experiences = category_order
        .iter()
        .enumerate()
        .map(|(task_id, label)| {
            let samples = dataset
                .samples()
                .iter()
                .filter(|s| s.category.as_deref() == Some(label.as_str()))
                .cloned()
                .collect();
            split_experience(dataset, samples, label, task_id, test_fraction, seed)
        })
        .collect::<Result<Vec<_>>>()?;
    ExperienceStream::new(
        experiences,
        ScenarioKind::InputIncremental,
        format!(
            "categories [{}], test fraction {test_fraction}, seed {seed}",
            category_order.join(", ")
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{generate_synthetic, toy_dataset, SyntheticSpec};

    fn targets(bins: &[Vec<Sample>]) -> Vec<Vec<f64>> {
        bins.iter()
            .map(|b| b.iter().map(|s| s.target).collect())
            .collect()
    }

    #[test]
    fn quantile_bins_of_eight() {
        let d = toy_dataset(&[5.0, 1.0, 8.0, 3.0, 2.0, 7.0, 4.0, 6.0], None);
        let bins = partition_by_target(&d, 4, BinMode::Quantile).unwrap();
        assert_eq!(
            targets(&bins),
            vec![
                vec![1.0, 2.0],
                vec![3.0, 4.0],
                vec![5.0, 6.0],
                vec![7.0, 8.0]
            ]
        );
    }

    #[test]
    fn quantile_and_equal_width_diverge_on_skew() {
        let d = toy_dataset(&[1.0, 2.0, 3.0, 100.0], None);
        let q = partition_by_target(&d, 2, BinMode::Quantile).unwrap();
        assert_eq!(targets(&q), vec![vec![1.0, 2.0], vec![3.0, 100.0]]);
        match partition_by_target(&d, 2, BinMode::EqualWidth) {
            Err(CoreError::Scenario(msg)) => assert!(msg.contains("bin 1"), "{msg}"),
            other => panic!("expected scenario error, got {other:?}"),
        }
    }

    #[test]
    fn equal_width_last_bin_is_right_inclusive() {
        let d = toy_dataset(&[0.0, 1.0, 2.0, 3.0, 4.0, 4.0], None);
        let bins = partition_by_target(&d, 2, BinMode::EqualWidth).unwrap();
        assert_eq!(
            targets(&bins),
            vec![vec![0.0, 1.0], vec![2.0, 3.0, 4.0, 4.0]]
        );
    }

    #[test]
    fn ties_break_by_id() {
        let d = toy_dataset(&[1.0, 1.0, 1.0, 1.0], None);
        let bins = partition_by_target(&d, 2, BinMode::Quantile).unwrap();
        assert_eq!(bins[0].iter().map(|s| s.id).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn bin_stream_is_monotone_in_target() {
        let d = generate_synthetic(&SyntheticSpec {
            n_samples: 203,
            feature_dim: 3,
            n_categories: 2,
            noise_std: 0.05,
            seed: 1,
        })
        .unwrap();
        let stream = build_bin_incremental(&d, 4, BinMode::Quantile, 0.2, 3).unwrap();
        assert_eq!(stream.len(), 4);
        for pair in stream.experiences().windows(2) {
            let hi = pair[0]
                .train
                .samples()
                .iter()
                .chain(pair[0].test.samples())
                .map(|s| s.target)
                .fold(f64::MIN, f64::max);
            let lo = pair[1]
                .train
                .samples()
                .iter()
                .chain(pair[1].test.samples())
                .map(|s| s.target)
                .fold(f64::MAX, f64::min);
            assert!(hi <= lo);
        }
        let sizes: Vec<usize> = stream
            .experiences()
            .iter()
            .map(|e| e.train.len() + e.test.len())
            .collect();
        assert_eq!(sizes, vec![51, 51, 51, 50]);
    }

    #[test]
    fn bin_stream_rejects_too_few_samples_or_bins() {
        let d = toy_dataset(&(0..12).map(f64::from).collect::<Vec<_>>(), None);
        assert!(matches!(
            build_bin_incremental(&d, 1, BinMode::Quantile, 0.2, 0),
            Err(CoreError::Scenario(_))
        ));
        assert!(matches!(
            build_bin_incremental(&d, 3, BinMode::Quantile, 0.2, 0),
            Err(CoreError::Scenario(_))
        ));
    }

    fn labelled(labels: &[&str], n: usize) -> Dataset {
        toy_dataset(
            &(0..n).map(|i| i as f64 + 1.0).collect::<Vec<_>>(),
            Some(labels),
        )
    }

    #[test]
    fn input_incremental_follows_given_order() {
        let d = labelled(&["Fastback", "Notchback", "Estateback"], 60);
        let order: Vec<String> = ["Fastback", "Estateback", "Notchback"]
            .map(String::from)
            .to_vec();
        let stream = build_input_incremental(&d, &order, 0.2, 5).unwrap();
        assert_eq!(stream.len(), 3);
        for (exp, label) in stream.experiences().iter().zip(&order) {
            assert!(exp
                .train
                .samples()
                .iter()
                .chain(exp.test.samples())
                .all(|s| s.category.as_ref() == Some(label)));
            assert_eq!(exp.train.len() + exp.test.len(), 20);
        }
    }

    #[test]
    fn input_incremental_label_errors() {
        let d = labelled(&["a", "b"], 20);
        let err = build_input_incremental(&d, &["a".into()], 0.2, 0).unwrap_err();
        assert!(err.to_string().contains("`b`"));
        let err =
            build_input_incremental(&d, &["a".into(), "b".into(), "z".into()], 0.2, 0).unwrap_err();
        assert!(err.to_string().contains("`z`"));
        let single = labelled(&["a"], 20);
        assert!(matches!(
            build_input_incremental(&single, &["a".into()], 0.2, 0),
            Err(CoreError::Scenario(_))
        ));
        let unlabeled = toy_dataset(&[1.0; 10], None);
        assert!(matches!(
            build_input_incremental(&unlabeled, &["a".into(), "b".into()], 0.2, 0),
            Err(CoreError::Scenario(_))
        ));
    }

    #[test]
    fn stream_rejects_overlapping_ids() {
        let d = toy_dataset(&[1.0, 2.0, 3.0, 4.0], None);
        let (train, test) = split_train_test(&d, 0.5, 0).unwrap();
        let e0 = Experience {
            task_id: 0,
            train: train.clone(),
            test: test.clone(),
        };
        let e1 = Experience {
            task_id: 1,
            train,
            test,
        };
        assert!(
            ExperienceStream::new(vec![e0.clone(), e1], ScenarioKind::BinIncremental, "").is_err()
        );
        let wrong_id = Experience { task_id: 3, ..e0 };
        assert!(ExperienceStream::new(vec![wrong_id], ScenarioKind::BinIncremental, "").is_err());
    }
}
