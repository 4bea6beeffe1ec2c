use serde::{Deserialize, Serialize};

use super::{GraphError, TextAttributedGraph};
use crate::numerics::{sample_without_replacement, Rng};

/// One train/test partition of the node set.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub repeat_index: usize,
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitStrategy {
    #[default]
    Uniform,
    /// Per-class quotas by largest remainder; totals follow the same rounding rule.
    Stratified,
}

pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Splits for a labelled graph: `repeats` partitions, train size
/// `round(train_frac·N)` and test size `round(test_frac·(N − train))` drawn
/// from the nodes not in train.
pub fn make_splits(
    graph: &TextAttributedGraph,
    train_frac: f64,
    test_frac: f64,
    repeats: usize,
    seed: u64,
) -> Result<Vec<SplitAssignment>, GraphError> {
    let labels = graph.labels().ok_or(GraphError::MissingLabels)?;
    split_nodes(labels, train_frac, test_frac, repeats, seed, SplitStrategy::Uniform)
}

pub fn split_nodes(
    labels: &[usize],
    train_frac: f64,
    test_frac: f64,
    repeats: usize,
    seed: u64,
    strategy: SplitStrategy,
) -> Result<Vec<SplitAssignment>, GraphError> {
    let valid = |f: f64| (0.0..=1.0).contains(&f);
    if !valid(train_frac) || !valid(test_frac) || train_frac + test_frac * (1.0 - train_frac) > 1.0 {
        return Err(GraphError::BadFractions {
            train: train_frac,
            test: test_frac,
        });
    }
    let n = labels.len();
    let n_train = round_half_up(train_frac * n as f64).min(n);
    let n_test = round_half_up(test_frac * (n - n_train) as f64).min(n - n_train);

    Ok((0..repeats)
        .map(|r| {
            let split_seed = seed ^ r as u64;
            let mut rng = Rng::seed_from(split_seed);
            let (train_ids, test_ids) = match strategy {
                SplitStrategy::Uniform => uniform(&mut rng, n, n_train, n_test),
                SplitStrategy::Stratified => stratified(&mut rng, labels, n_train, n_test),
            };
            SplitAssignment {
                repeat_index: r,
                train_ids,
                test_ids,
                seed: split_seed,
            }
        })
        .collect())
}

fn uniform(rng: &mut Rng, n: usize, n_train: usize, n_test: usize) -> (Vec<usize>, Vec<usize>) {
    let train = sample_without_replacement(rng, n, n_train).expect("n_train <= n");
    let rest = complement(n, &train);
    let test = sample_without_replacement(rng, rest.len(), n_test)
        .expect("n_test <= rest")
        .into_iter()
        .map(|k| rest[k])
        .collect();
    (train, test)
}

fn complement(n: usize, sorted: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(n - sorted.len());
    let mut it = sorted.iter().peekable();
    for i in 0..n {
        if it.peek() == Some(&&i) {
            it.next();
        } else {
            out.push(i);
        }
    }
    out
}

fn stratified(rng: &mut Rng, labels: &[usize], n_train: usize, n_test: usize) -> (Vec<usize>, Vec<usize>) {
    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut pools: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        pools[l].push(i);
    }
    let train = draw_by_quota(rng, &mut pools, n_train);
    let test = draw_by_quota(rng, &mut pools, n_test);
    (train, test)
}

/// Removes `total` nodes from the class pools, proportionally to pool sizes.
fn draw_by_quota(rng: &mut Rng, pools: &mut [Vec<usize>], total: usize) -> Vec<usize> {
    let available: usize = pools.iter().map(Vec::len).sum();
    if available == 0 {
        return Vec::new();
    }
    let exact: Vec<f64> = pools
        .iter()
        .map(|p| total as f64 * p.len() as f64 / available as f64)
        .collect();
    let mut quota: Vec<usize> = exact.iter().map(|q| q.floor() as usize).collect();
    let mut order: Vec<usize> = (0..pools.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - quota[a] as f64;
        let rb = exact[b] - quota[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut missing = total - quota.iter().sum::<usize>();
    for &c in order.iter().cycle().take(order.len() * 2) {
        if missing == 0 {
            break;
        }
        if quota[c] < pools[c].len() {
            quota[c] += 1;
            missing -= 1;
        }
    }
    let mut out = Vec::with_capacity(total);
    for (pool, &q) in pools.iter_mut().zip(&quota) {
        let picked = sample_without_replacement(rng, pool.len(), q).expect("quota <= pool");
        for &k in picked.iter().rev() {
            out.push(pool.remove(k));
        }
    }
    out.sort_unstable();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize, c: usize) -> Vec<usize> {
        (0..n).map(|i| i % c).collect()
    }

    #[test]
    fn ten_nodes_default_fractions() {
        let splits = split_nodes(&labels(10, 2), 0.2, 0.1, 5, 3, SplitStrategy::Uniform).unwrap();
        assert_eq!(splits.len(), 5);
        for s in &splits {
            assert_eq!(s.train_ids.len(), 2);
            assert_eq!(s.test_ids.len(), 1);
        }
    }

    #[test]
    fn deterministic_given_seed() {
        let a = split_nodes(&labels(50, 3), 0.2, 0.1, 3, 9, SplitStrategy::Uniform).unwrap();
        let b = split_nodes(&labels(50, 3), 0.2, 0.1, 3, 9, SplitStrategy::Uniform).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn hundred_nodes_disjoint() {
        let splits = split_nodes(&labels(100, 4), 0.2, 0.1, 5, 11, SplitStrategy::Uniform).unwrap();
        for s in &splits {
            assert_eq!(s.train_ids.len(), 20);
            assert_eq!(s.test_ids.len(), 8);
            let overlap = s.train_ids.iter().filter(|i| s.test_ids.contains(i)).count();
            assert_eq!(overlap, 0);
        }
    }

    #[test]
    fn stratified_keeps_totals_and_balance() {
        let splits = split_nodes(&labels(100, 4), 0.2, 0.1, 2, 1, SplitStrategy::Stratified).unwrap();
        for s in &splits {
            assert_eq!(s.train_ids.len(), 20);
            assert_eq!(s.test_ids.len(), 8);
            for c in 0..4 {
                assert_eq!(s.train_ids.iter().filter(|&&i| i % 4 == c).count(), 5);
                assert_eq!(s.test_ids.iter().filter(|&&i| i % 4 == c).count(), 2);
            }
            assert!(s.train_ids.iter().all(|i| !s.test_ids.contains(i)));
        }
    }

    #[test]
    fn rejects_bad_fractions_and_unlabelled_graphs() {
        assert!(split_nodes(&labels(10, 2), 1.5, 0.1, 1, 0, SplitStrategy::Uniform).is_err());
        assert!(split_nodes(&labels(10, 2), 0.2, -0.1, 1, 0, SplitStrategy::Uniform).is_err());
        let g = TextAttributedGraph::new(vec!["a".into(), "b".into()], [], None).unwrap();
        assert!(matches!(
            make_splits(&g, 0.2, 0.1, 1, 0),
            Err(GraphError::MissingLabels)
        ));
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(0.8), 1);
        assert_eq!(round_half_up(0.49), 0);
    }
}
