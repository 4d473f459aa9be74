//! Open-set experimental splits: choose known classes, hold the rest out as
//! unknowns that appear only at test time.

use super::sparse::{class_counts, SparseSample};
use crate::error::{Error, Result};
use crate::rng;
use rand::seq::SliceRandom;
use std::collections::BTreeSet;

/// One experimental trial: train on the known classes, test on held-out
/// known samples plus every sample of the unknown classes.
#[derive(Debug, Clone)]
pub struct OpenSetSplit {
    pub known_labels: BTreeSet<i32>,
    pub train: Vec<SparseSample>,
    pub test: Vec<SparseSample>,
    pub seed: u64,
}

/// Build an open-set split with the default 60/40 per-class train/test
/// partition. Same `(dataset, n_acs, trial_seed)` gives the same split, so
/// two methods trained under the same trial seed see identical sample sets.
pub fn make_open_split(
    dataset: &[SparseSample],
    n_acs: usize,
    trial_seed: u64,
) -> Result<OpenSetSplit> {
    make_open_split_with_fraction(dataset, n_acs, trial_seed, 0.6)
}

/// As [`make_open_split`] with an explicit train fraction in (0, 1).
///
/// The per-class partition is derived only from `(trial_seed, class label)`,
/// independent of which classes end up known, so the same seed partitions
/// every class identically across experiments.
pub fn make_open_split_with_fraction(
    dataset: &[SparseSample],
    n_acs: usize,
    trial_seed: u64,
    train_fraction: f64,
) -> Result<OpenSetSplit> {
    assert!(
        train_fraction > 0.0 && train_fraction < 1.0,
        "train_fraction must be in (0, 1)"
    );
    let counts = class_counts(dataset);
    if counts.len() <= n_acs || n_acs == 0 {
        return Err(Error::NotEnoughClasses {
            n_acs,
            available: counts.len(),
        });
    }

    let mut labels: Vec<i32> = counts.keys().copied().collect();
    let mut class_rng = rng::stream(trial_seed, "open-split/classes");
    labels.shuffle(&mut class_rng);
    let known_labels: BTreeSet<i32> = labels[..n_acs].iter().copied().collect();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for (&label, &count) in &counts {
        let indices: Vec<usize> = dataset
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == label)
            .map(|(i, _)| i)
            .collect();
        if !known_labels.contains(&label) {
            test.extend(indices.iter().map(|&i| dataset[i].clone()));
            continue;
        }
        let mut shuffled = indices;
        let mut part_rng = rng::stream(trial_seed, &format!("open-split/class/{label}"));
        shuffled.shuffle(&mut part_rng);
        let n_train = ((count as f64 * train_fraction).floor() as usize).max(1);
        let n_train = n_train.min(count.saturating_sub(1).max(1));
        for (pos, &i) in shuffled.iter().enumerate() {
            if pos < n_train {
                train.push(dataset[i].clone());
            } else {
                test.push(dataset[i].clone());
            }
        }
    }
    Ok(OpenSetSplit {
        known_labels,
        train,
        test,
        seed: trial_seed,
    })
}
