//! Deterministic dataset partitioning and sampling.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Size of the first partition: `floor(len * fraction)`.
pub fn partition_size(len: usize, fraction: f64) -> usize {
    // The epsilon keeps products like 10 * 0.3 from landing just under 3.
    ((len as f64) * fraction + 1e-9).floor() as usize
}

/// Splits indices `0..len` into (first, rest) with `partition_size` in the
/// first part. Both parts keep ascending order.
pub fn split_indices(len: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} not in (0, 1)")));
    }
    let take = partition_size(len, fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = vec![false; len];
    for i in index::sample(&mut rng, len, take) {
        chosen[i] = true;
    }
    let (first, rest): (Vec<usize>, Vec<usize>) = (0..len).partition(|&i| chosen[i]);
    Ok((first, rest))
}

/// Returns `(evaluation, finetune)`.
pub fn split_dataset<T: Clone>(records: &[T], eval_fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    let (eval, ft) = split_indices(records.len(), eval_fraction, seed)?;
    Ok((
        eval.into_iter().map(|i| records[i].clone()).collect(),
        ft.into_iter().map(|i| records[i].clone()).collect(),
    ))
}

/// Uniform sample without replacement; keeps input order.
pub fn sample_evaluation<T: Clone>(records: &[T], n: usize, seed: u64) -> Result<Vec<T>> {
    if n > records.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: records.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, records.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| records[i].clone()).collect())
}
