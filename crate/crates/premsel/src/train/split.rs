//! Deterministic corpus splitting with size-based routing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// File indices partitioned into the three usable sets.
///
/// The split is drawn before sizes are considered: oversized files landing
/// on the training side are dropped outright, while oversized evaluation
/// files form a standalone out-of-distribution set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<usize>,
    pub eval_id: Vec<usize>,
    pub eval_ood: Vec<usize>,
    pub dropped_oversized_train: Vec<usize>,
}

/// Splits `n` files into train/eval by `ratio`, seeded and reproducible.
pub fn split_corpus(oversized: &[bool], ratio: f64, seed: u64) -> CorpusSplit {
    let n = oversized.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let train_n = (n as f64 * ratio).round() as usize;
    let mut split = CorpusSplit {
        train: Vec::new(),
        eval_id: Vec::new(),
        eval_ood: Vec::new(),
        dropped_oversized_train: Vec::new(),
    };
    for (pos, &idx) in order.iter().enumerate() {
        let big = oversized[idx];
        match (pos < train_n, big) {
            (true, false) => split.train.push(idx),
            (true, true) => split.dropped_oversized_train.push(idx),
            (false, false) => split.eval_id.push(idx),
            (false, true) => split.eval_ood.push(idx),
        }
    }
    split.train.sort_unstable();
    split.eval_id.sort_unstable();
    split.eval_ood.sort_unstable();
    split.dropped_oversized_train.sort_unstable();
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_sets_the_partition_sizes() {
        let flags = vec![false; 100];
        let split = split_corpus(&flags, 0.85, 42);
        assert_eq!(split.train.len(), 85);
        assert_eq!(split.eval_id.len(), 15);
        assert!(split.eval_ood.is_empty());
    }

    #[test]
    fn oversized_files_route_by_side() {
        let mut flags = vec![false; 20];
        for f in flags.iter_mut() {
            *f = true;
        }
        let split = split_corpus(&flags, 0.5, 7);
        assert!(split.train.is_empty());
        assert!(split.eval_id.is_empty());
        assert_eq!(split.eval_ood.len(), 10);
        assert_eq!(split.dropped_oversized_train.len(), 10);
    }

    #[test]
    fn same_seed_same_split() {
        let flags: Vec<bool> = (0..50).map(|i| i % 7 == 0).collect();
        assert_eq!(split_corpus(&flags, 0.85, 3), split_corpus(&flags, 0.85, 3));
        assert_ne!(split_corpus(&flags, 0.85, 3), split_corpus(&flags, 0.85, 4));
    }

    #[test]
    fn every_file_lands_exactly_once() {
        let flags: Vec<bool> = (0..31).map(|i| i % 5 == 0).collect();
        let split = split_corpus(&flags, 0.7, 11);
        let mut all: Vec<usize> = split
            .train
            .iter()
            .chain(&split.eval_id)
            .chain(&split.eval_ood)
            .chain(&split.dropped_oversized_train)
            .copied()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..31).collect::<Vec<_>>());
    }
}
