use super::{ContrastiveError, Negatives};
use crate::numerics::{sample_without_replacement, Rng};

pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_BATCHES: u64 = 2;
pub(crate) const STREAM_NEGATIVES: u64 = 3;

/// Seeded shuffle of `0..n` chunked into batches. A final chunk of one node
/// is merged into the previous batch.
pub fn plan_batches(n: usize, batch_size: usize, epoch: usize, seed: u64) -> Result<Vec<Vec<usize>>, ContrastiveError> {
    if n < 2 {
        return Err(ContrastiveError::Config(format!(
            "need at least 2 nodes to form a batch, got {n}"
        )));
    }
    if batch_size < 2 {
        return Err(ContrastiveError::Config("batch_size must be at least 2".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    Rng::derived(seed, STREAM_BATCHES, epoch as u64).shuffle(&mut order);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() < 2) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    Ok(batches)
}

/// Batch positions of the negatives for the target at `target_pos`.
pub(crate) fn sample_negative_positions(
    batch_len: usize,
    target_pos: usize,
    negatives: Negatives,
    rng: &mut Rng,
) -> Result<Vec<usize>, ContrastiveError> {
    if target_pos >= batch_len {
        return Err(ContrastiveError::Config(format!(
            "target position {target_pos} outside batch of {batch_len}"
        )));
    }
    let others = batch_len - 1;
    let m = negatives.resolve(batch_len);
    if m > others {
        return Err(ContrastiveError::TooManyNegatives {
            requested: m,
            available: others,
        });
    }
    if m == others {
        return Ok((0..batch_len).filter(|&p| p != target_pos).collect());
    }
    let picks = sample_without_replacement(rng, others, m)?;
    Ok(picks
        .into_iter()
        .map(|k| if k >= target_pos { k + 1 } else { k })
        .collect())
}

/// Uniform `M`-subset of `batch` without `target`. With [`Negatives::All`]
/// the result is the rest of the batch in batch order.
pub fn sample_negatives(
    batch: &[usize],
    target: usize,
    negatives: Negatives,
    rng: &mut Rng,
) -> Result<Vec<usize>, ContrastiveError> {
    let pos = batch
        .iter()
        .position(|&b| b == target)
        .ok_or(ContrastiveError::TargetNotInBatch(target))?;
    Ok(sample_negative_positions(batch.len(), pos, negatives, rng)?
        .into_iter()
        .map(|p| batch[p])
        .collect())
}
