use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub n_splits: usize,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            n_splits: 5,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// Sorted, disjoint row indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Moves a seeded `fraction` of the training rows into a held-out set.
    /// Returns `(fit_rows, holdout_rows)`.
    pub fn carve_holdout(&self, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        let (a, b) = shuffle_cut(&self.train, fraction, seed)?;
        Ok((a, b))
    }
}

fn shuffle_cut(rows: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n = rows.len();
    let cut = ((n as f64 * fraction).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    if n < 2 {
        return Err(Error::invalid(format!("cannot split {n} rows")));
    }
    let mut perm = rows.to_vec();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut held = perm[..cut].to_vec();
    let mut kept = perm[cut..].to_vec();
    held.sort_unstable();
    kept.sort_unstable();
    Ok((kept, held))
}

/// Independent seeded train/test resamples. Split `k` depends only on
/// `(n, spec.test_fraction, spec.seed, k)`.
pub fn make_splits(n: usize, spec: &SplitSpec) -> Result<Vec<Split>> {
    if n < 5 {
        return Err(Error::invalid(format!("need at least 5 rows to split, got {n}")));
    }
    if spec.n_splits == 0 {
        return Err(Error::invalid("n_splits must be at least 1"));
    }
    let all: Vec<usize> = (0..n).collect();
    (0..spec.n_splits)
        .map(|k| {
            let seed = spec.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64);
            let (train, test) = shuffle_cut(&all, spec.test_fraction, seed)?;
            Ok(Split { index: k, train, test })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_for_ten_rows() {
        let splits = make_splits(10, &SplitSpec::default()).unwrap();
        assert_eq!(splits.len(), 5);
        for s in &splits {
            assert_eq!(s.test.len(), 2);
            assert_eq!(s.train.len(), 8);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = SplitSpec { seed: 9, ..SplitSpec::default() };
        assert_eq!(make_splits(57, &spec).unwrap(), make_splits(57, &spec).unwrap());
        let other = SplitSpec { seed: 10, ..spec };
        assert_ne!(make_splits(57, &spec).unwrap(), make_splits(57, &other).unwrap());
    }

    #[test]
    fn splits_differ_from_each_other() {
        let splits = make_splits(100, &SplitSpec::default()).unwrap();
        assert_ne!(splits[0].test, splits[1].test);
    }

    #[test]
    fn too_small() {
        assert!(make_splits(4, &SplitSpec::default()).is_err());
    }

    #[test]
    fn partition_property() {
        for n in [5, 6, 13, 200] {
            for s in make_splits(n, &SplitSpec { seed: n as u64, ..SplitSpec::default() }).unwrap() {
                let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                all.sort_unstable();
                assert_eq!(all, (0..n).collect::<Vec<_>>());
                assert!(s.train.iter().all(|i| s.test.binary_search(i).is_err()));
            }
        }
    }

    #[test]
    fn holdout_partitions_train() {
        let s = &make_splits(50, &SplitSpec::default()).unwrap()[0];
        let (fit, held) = s.carve_holdout(0.25, 3).unwrap();
        assert_eq!(held.len(), 10);
        let mut all: Vec<usize> = fit.iter().chain(&held).copied().collect();
        all.sort_unstable();
        assert_eq!(all, s.train);
    }
}
