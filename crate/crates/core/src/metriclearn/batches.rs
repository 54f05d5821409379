use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;

/// Class-balanced minibatch layout: `classes_per_batch` distinct labels with
/// `samples_per_class` examples each.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MiniBatchSpec {
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
}

impl Default for MiniBatchSpec {
    fn default() -> Self {
        Self {
            classes_per_batch: 16,
            samples_per_class: 16,
        }
    }
}

impl MiniBatchSpec {
    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.samples_per_class
    }
}

/// Batches for one epoch: `ceil(N / m)` batches, each holding
/// `classes_per_batch` randomly chosen classes.
///
/// Within a class, examples are drawn without replacement when the class has
/// enough of them and with replacement otherwise. The result depends only on
/// `(labels, spec, seed, epoch)`.
pub fn make_minibatches(labels: &[usize], spec: MiniBatchSpec, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if spec.classes_per_batch == 0 || spec.samples_per_class == 0 {
        bail!(InvalidArgument, "minibatch spec must be positive");
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if by_class.len() < spec.classes_per_batch {
        bail!(
            InvalidArgument,
            "{} distinct classes, need at least {} per batch",
            by_class.len(),
            spec.classes_per_batch
        );
    }
    let classes: Vec<&Vec<usize>> = by_class.values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let n_batches = labels.len().div_ceil(spec.batch_size());
    let mut batches = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let mut batch = Vec::with_capacity(spec.batch_size());
        for members in classes.choose_multiple(&mut rng, spec.classes_per_batch) {
            if members.len() >= spec.samples_per_class {
                batch.extend(members.choose_multiple(&mut rng, spec.samples_per_class).copied());
            } else {
                batch.extend((0..spec.samples_per_class).map(|_| members[rng.random_range(0..members.len())]));
            }
        }
        batch.shuffle(&mut rng);
        batches.push(batch);
    }
    Ok(batches)
}
