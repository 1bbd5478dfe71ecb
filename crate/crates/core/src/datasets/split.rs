use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Dataset, Sample};
use crate::error::{CoreError, Result};
use crate::rng;

/// Number of test samples per stratum, summing to `round(fraction * n)`.
/// Strata get their floor share first; leftover slots go to the largest
/// fractional remainders (ties to the earlier stratum).
fn allocate(sizes: &[usize], fraction: f64) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let target = (fraction * total as f64).round() as usize;
    let exact: Vec<f64> = sizes.iter().map(|&s| fraction * s as f64).collect();
    let mut alloc: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut remaining = target.saturating_sub(alloc.iter().sum());
    for &i in order.iter().cycle().take(order.len() * 2) {
        if remaining == 0 {
            break;
        }
        if alloc[i] < sizes[i] {
            alloc[i] += 1;
            remaining -= 1;
        }
    }
    alloc
}

/// Random train/test partition, stratified by category when every sample has one.
/// Both halves keep ascending id order.
pub fn split_train_test(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(CoreError::Argument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = dataset.len();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(CoreError::Argument(format!(
            "cannot split {n} samples of `{}` at fraction {test_fraction} into two non-empty sets",
            dataset.name()
        )));
    }

    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    if dataset.has_categories() {
        for (i, s) in dataset.samples().iter().enumerate() {
            strata
                .entry(s.category.clone().unwrap())
                .or_default()
                .push(i);
        }
    } else {
        strata.insert(String::new(), (0..n).collect());
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let alloc = allocate(&sizes, test_fraction);

    let mut shuffle_rng = rng::stream(seed, "train-test-split", 0);
    let mut is_test = vec![false; n];
    for (members, take) in strata.into_values().zip(alloc) {
        let mut members = members;
        members.shuffle(&mut shuffle_rng);
        for &i in &members[..take] {
            is_test[i] = true;
        }
    }

    let (mut train, mut test): (Vec<Sample>, Vec<Sample>) = (Vec::new(), Vec::new());
    for (s, t) in dataset.samples().iter().zip(is_test) {
        if t {
            test.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    train.sort_by_key(|s| s.id);
    test.sort_by_key(|s| s.id);
    Ok((
        dataset.with_samples(format!("{}/train", dataset.name()), train)?,
        dataset.with_samples(format!("{}/test", dataset.name()), test)?,
    ))
}

/// Per-feature z-score statistics (population standard deviation).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Constant features get `std = 1` so they map to zero instead of dividing by zero.
    pub fn fit(dataset: &Dataset) -> Self {
        let n = dataset.len() as f64;
        let dim = dataset.feature_dim();
        let mut mean = vec![0.0; dim];
        for s in dataset.samples() {
            for (m, v) in mean.iter_mut().zip(&s.features) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for s in dataset.samples() {
            for ((acc, v), m) in var.iter_mut().zip(&s.features).zip(&mean) {
                *acc += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, dataset: &Dataset) -> Result<Dataset> {
        if dataset.feature_dim() != self.mean.len() {
            return Err(CoreError::Shape(format!(
                "statistics cover {} features, `{}` has {}",
                self.mean.len(),
                dataset.name(),
                dataset.feature_dim()
            )));
        }
        let samples = dataset
            .samples()
            .iter()
            .map(|s| Sample {
                features: s
                    .features
                    .iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(v, (m, sd))| (v - m) / sd)
                    .collect(),
                ..s.clone()
            })
            .collect();
        dataset.with_samples(dataset.name(), samples)
    }
}

/// Z-scores `train` and every dataset in `others` with statistics fitted on `train` alone.
pub fn normalize_features(
    train: &Dataset,
    others: &[Dataset],
) -> Result<(Dataset, Vec<Dataset>, NormStats)> {
    if train.is_empty() {
        return Err(CoreError::Argument(
            "cannot normalize against an empty train set".into(),
        ));
    }
    let stats = NormStats::fit(train);
    let train_n = stats.apply(train)?;
    let others_n = others
        .iter()
        .map(|d| stats.apply(d))
        .collect::<Result<Vec<_>>>()?;
    Ok((train_n, others_n, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::toy_dataset;

    #[test]
    fn split_sizes_and_partition() {
        let d = toy_dataset(&(0..10).map(f64::from).collect::<Vec<_>>(), None);
        let (train, test) = split_train_test(&d, 0.2, 1).unwrap();
        assert_eq!((train.len(), test.len()), (8, 2));
        let mut all: Vec<u64> = train.ids().into_iter().chain(test.ids()).collect();
        all.sort();
        assert_eq!(all, d.ids());
    }

    #[test]
    fn split_deterministic_in_seed() {
        let d = toy_dataset(&(0..50).map(f64::from).collect::<Vec<_>>(), None);
        let a = split_train_test(&d, 0.3, 9).unwrap();
        let b = split_train_test(&d, 0.3, 9).unwrap();
        assert_eq!(a, b);
        let c = split_train_test(&d, 0.3, 10).unwrap();
        assert_ne!(a.1.ids(), c.1.ids());
    }

    #[test]
    fn stratified_split_balances_categories() {
        let d = toy_dataset(
            &(0..100).map(f64::from).collect::<Vec<_>>(),
            Some(&["a", "b"]),
        );
        let (_, test) = split_train_test(&d, 0.2, 4).unwrap();
        let a = test
            .samples()
            .iter()
            .filter(|s| s.category.as_deref() == Some("a"))
            .count();
        let b = test.len() - a;
        assert_eq!(test.len(), 20);
        assert!(a.abs_diff(b) <= 1);
    }

    #[test]
    fn stratified_allocation_hits_rounded_total() {
        // 1.5 each, round(4.5) = 5 in total; ties go to the earlier strata.
        assert_eq!(allocate(&[3, 3, 3], 0.5), vec![2, 2, 1]);
        assert_eq!(allocate(&[50, 50], 0.2), vec![10, 10]);
        assert_eq!(allocate(&[7, 3], 0.25).iter().sum::<usize>(), 3);
    }

    #[test]
    fn fraction_out_of_range() {
        let d = toy_dataset(&[1.0, 2.0, 3.0], None);
        assert!(split_train_test(&d, 0.0, 1).is_err());
        assert!(split_train_test(&d, 1.0, 1).is_err());
        assert!(split_train_test(&d, 0.01, 1).is_err());
    }

    #[test]
    fn zscore_population_convention() {
        let samples = vec![
            Sample {
                id: 0,
                features: vec![1.0, 5.0],
                target: 0.1,
                category: None,
            },
            Sample {
                id: 1,
                features: vec![3.0, 5.0],
                target: 0.2,
                category: None,
            },
        ];
        let train = Dataset::new("t", vec!["a".into(), "b".into()], samples).unwrap();
        let (n, _, stats) = normalize_features(&train, &[]).unwrap();
        assert_eq!(stats.mean, vec![2.0, 5.0]);
        assert_eq!(stats.std, vec![1.0, 1.0]);
        assert_eq!(n.samples()[0].features, vec![-1.0, 0.0]);
        assert_eq!(n.samples()[1].features, vec![1.0, 0.0]);
        assert_eq!(n.targets().to_vec(), vec![0.1, 0.2]);
    }

    #[test]
    fn test_set_uses_train_statistics() {
        let train = toy_dataset(&[1.0, 2.0, 3.0, 4.0], None);
        let test = toy_dataset(&[10.0, 20.0], None);
        let (train_n, others, stats) =
            normalize_features(&train, std::slice::from_ref(&test)).unwrap();
        assert_eq!(stats, NormStats::fit(&train));
        assert_eq!(others[0], stats.apply(&test).unwrap());
        // Renormalizing an already normalized set gives zero-mean columns again.
        let again = NormStats::fit(&train_n);
        assert!(again.mean.iter().all(|m| m.abs() < 1e-12));
    }
}
