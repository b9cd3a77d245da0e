//! Grouped index shuffling so that windows of one subject land in the same
//! batch, which subject-level contrast needs to find positives.

use rand::seq::SliceRandom;
use rand::SeedableRng;

use crate::error::{config, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPlan {
    pub order: Vec<usize>,
    pub batch_size: usize,
    pub group_size: usize,
    pub epoch_seed: u64,
}

/// Sort indices by subject (stable), cut into groups of `group_size`, shuffle
/// the groups, cut the result into batches and shuffle inside each batch.
///
/// A short final group stays at the tail; shuffling it into the middle would
/// shift every later group off the batch grid.
pub fn shuffle_indices(
    subject_ids: &[u32],
    batch_size: usize,
    group_size: usize,
    epoch_seed: u64,
) -> Result<BatchPlan> {
    if batch_size == 0 || group_size == 0 {
        return Err(config("batch_size and group_size must be positive"));
    }
    if !batch_size.is_multiple_of(group_size) {
        return Err(config(format!(
            "batch_size {batch_size} is not a multiple of group_size {group_size}"
        )));
    }
    let mut sorted: Vec<usize> = (0..subject_ids.len()).collect();
    sorted.sort_by_key(|&i| (subject_ids[i], i));

    let mut rng = Rng::seed_from_u64(epoch_seed);
    let full = sorted.len() / group_size * group_size;
    let mut groups: Vec<&[usize]> = sorted[..full].chunks(group_size).collect();
    groups.shuffle(&mut rng);
    let mut order: Vec<usize> = groups.concat();
    order.extend_from_slice(&sorted[full..]);
    for batch in order.chunks_mut(batch_size) {
        batch.shuffle(&mut rng);
    }
    Ok(BatchPlan {
        order,
        batch_size,
        group_size,
        epoch_seed,
    })
}

/// Consecutive chunks of the plan; the short tail is kept unless `drop_last`.
pub fn make_batches(plan: &BatchPlan, drop_last: bool) -> Vec<Vec<usize>> {
    plan.order
        .chunks(plan.batch_size)
        .filter(|b| !drop_last || b.len() == plan.batch_size)
        .map(|b| b.to_vec())
        .collect()
}
