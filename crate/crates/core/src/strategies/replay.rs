use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::datasets::{Dataset, Sample};
use crate::error::Result;
use crate::rng;
use crate::scenarios::Experience;

/// Past samples kept for rehearsal, one group per finished experience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    budget: usize,
    groups: Vec<(usize, Vec<Sample>)>,
}

/// Keeps `amount` of `samples` chosen uniformly without replacement, preserving order.
fn subsample(samples: &[Sample], amount: usize, rng: &mut impl rand::Rng) -> Vec<Sample> {
    if amount >= samples.len() {
        return samples.to_vec();
    }
    let mut picked = index::sample(rng, samples.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| samples[i].clone()).collect()
}

impl ReplayBuffer {
    pub fn new(budget: usize) -> Self {
        Self {
            budget,
            groups: Vec::new(),
        }
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn len(&self) -> usize {
        self.groups.iter().map(|(_, g)| g.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Group sizes in experience order.
    pub fn group_sizes(&self) -> Vec<usize> {
        self.groups.iter().map(|(_, g)| g.len()).collect()
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.groups.iter().flat_map(|(_, g)| g.iter())
    }

    /// Re-divides the budget equally over every experience seen so far
    /// (remainder to the earliest), shrinks the stored groups to their new
    /// slots and fills the slot of `finished` from its train set.
    pub fn update(&mut self, finished: &Experience, seed: u64) {
        let n_seen = self.groups.len() + 1;
        let base = self.budget / n_seen;
        let extra = self.budget % n_seen;
        let slot = |i: usize| base + usize::from(i < extra);

        for (i, (task, group)) in self.groups.iter_mut().enumerate() {
            if group.len() > slot(i) {
                let mut r =
                    rng::stream(seed, "replay-shrink", (*task as u64) << 32 | n_seen as u64);
                *group = subsample(group, slot(i), &mut r);
            }
        }
        let mut r = rng::stream(seed, "replay-fill", finished.task_id as u64);
        let fresh = subsample(finished.train.samples(), slot(n_seen - 1), &mut r);
        self.groups.push((finished.task_id, fresh));
    }
}

/// Current train set followed by every buffered sample.
pub fn effective_train_set_replay(
    experience: &Experience,
    buffer: &ReplayBuffer,
) -> Result<Dataset> {
    let mut samples = experience.train.samples().to_vec();
    samples.extend(buffer.samples().cloned());
    experience
        .train
        .with_samples(format!("{}+replay", experience.train.name()), samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{split_train_test, toy_dataset};

    fn experience(task_id: usize, n: usize) -> Experience {
        let targets: Vec<f64> = (0..n).map(|i| (task_id * 1000 + i) as f64).collect();
        let base = toy_dataset(&targets, None);
        let shifted: Vec<Sample> = base
            .samples()
            .iter()
            .map(|s| Sample {
                id: s.id + 1000 * task_id as u64,
                ..s.clone()
            })
            .collect();
        let d = base.with_samples("exp", shifted).unwrap();
        let (train, test) = split_train_test(&d, 0.2, 0).unwrap();
        Experience {
            task_id,
            train,
            test,
        }
    }

    #[test]
    fn equal_slots_after_four_experiences() {
        let mut buf = ReplayBuffer::new(100);
        buf.update(&experience(0, 200), 1);
        assert_eq!(buf.group_sizes(), vec![100]);
        for t in 1..4 {
            buf.update(&experience(t, 200), 1);
        }
        assert_eq!(buf.group_sizes(), vec![25, 25, 25, 25]);
    }

    #[test]
    fn remainder_goes_to_earliest_and_groups_never_grow() {
        let mut buf = ReplayBuffer::new(10);
        buf.update(&experience(0, 4), 3); // 3 train samples available
        buf.update(&experience(1, 4), 3);
        buf.update(&experience(2, 4), 3);
        // Slots 4, 3, 3 but each experience only has 3 train samples.
        assert_eq!(buf.group_sizes(), vec![3, 3, 3]);
        assert!(buf.len() <= 10);

        let mut buf = ReplayBuffer::new(10);
        for t in 0..3 {
            buf.update(&experience(t, 50), 3);
        }
        assert_eq!(buf.group_sizes(), vec![4, 3, 3]);
    }

    #[test]
    fn shrinking_keeps_a_subset() {
        let mut buf = ReplayBuffer::new(20);
        buf.update(&experience(0, 50), 9);
        let before: Vec<u64> = buf.samples().map(|s| s.id).collect();
        buf.update(&experience(1, 50), 9);
        let after: Vec<u64> = buf.groups[0].1.iter().map(|s| s.id).collect();
        assert_eq!(after.len(), 10);
        assert!(after.iter().all(|id| before.contains(id)));
    }

    #[test]
    fn deterministic_in_seed() {
        let run = |seed| {
            let mut buf = ReplayBuffer::new(30);
            for t in 0..3 {
                buf.update(&experience(t, 60), seed);
            }
            buf
        };
        assert_eq!(run(4), run(4));
        assert_ne!(run(4), run(5));
    }

    #[test]
    fn effective_set_concatenates() {
        let exp0 = experience(0, 100);
        let exp1 = experience(1, 100);
        let empty = ReplayBuffer::new(20);
        assert_eq!(
            effective_train_set_replay(&exp1, &empty).unwrap().samples(),
            exp1.train.samples()
        );
        let mut buf = ReplayBuffer::new(20);
        buf.update(&exp0, 0);
        let set = effective_train_set_replay(&exp1, &buf).unwrap();
        assert_eq!(set.len(), 80 + 20);
    }
}
