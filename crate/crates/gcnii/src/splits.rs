//! Stratified 60/20/20 splits for the full-supervised protocol.

use gcnii_core::rng;
use rand::seq::SliceRandom;
use thiserror::Error;

use crate::dataset::Split;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SplitError {
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("class {class} has {count} labeled nodes; at least 5 are needed for a 60/20/20 split")]
    ClassTooSmall { class: usize, count: usize },
}

/// Smallest class size that leaves at least one node in every part.
pub const MIN_CLASS_SIZE: usize = 5;

/// Per-class sizes `(train, val, test)`: 60% and 20% rounded to the nearest
/// node, the rest to test.
pub fn part_sizes(count: usize) -> (usize, usize, usize) {
    let train = (count as f64 * 0.6).round() as usize;
    let val = (count as f64 * 0.2).round() as usize;
    (train, val, count - train - val)
}

/// `num_splits` stratified random splits of the labeled nodes. The same
/// seed gives the same splits.
pub fn stratified_splits(
    labels: &[i64],
    num_classes: usize,
    num_splits: usize,
    seed: u64,
) -> Result<Vec<Split>, SplitError> {
    if num_classes < 2 {
        return Err(SplitError::TooFewClasses(num_classes));
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (node, &label) in labels.iter().enumerate() {
        if label >= 0 {
            by_class[label as usize].push(node);
        }
    }
    if let Some((class, nodes)) = by_class.iter().enumerate().find(|(_, v)| v.len() < MIN_CLASS_SIZE) {
        return Err(SplitError::ClassTooSmall {
            class,
            count: nodes.len(),
        });
    }

    let mut rng = rng::stream(seed, rng::STREAM_SPLITS);
    let mut splits = Vec::with_capacity(num_splits);
    for _ in 0..num_splits {
        let mut split = Split {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for nodes in &by_class {
            let mut shuffled = nodes.clone();
            shuffled.shuffle(&mut rng);
            let (train, val, _) = part_sizes(shuffled.len());
            split.train.extend_from_slice(&shuffled[..train]);
            split.val.extend_from_slice(&shuffled[train..train + val]);
            split.test.extend_from_slice(&shuffled[train + val..]);
        }
        split.train.sort_unstable();
        split.val.sort_unstable();
        split.test.sort_unstable();
        splits.push(split);
    }
    Ok(splits)
}
