use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldMode {
    /// One fold per window.
    #[default]
    Lowo,
    /// Contiguous test blocks.
    BlockKfold,
}

/// Test and training window indices of one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
}

/// Leave-one-window-out folds over `0..n`: fold `i` tests `i` and trains on
/// every `j` with `|j - i| > radius`.
pub fn build_folds(n_windows: usize, exclusion_radius: usize) -> Result<Vec<Fold>> {
    let indices: Vec<usize> = (0..n_windows).collect();
    folds_for(&indices, FoldMode::Lowo, 0, exclusion_radius)
}

/// Folds over an explicit list of window indices (ordinals may have gaps
/// where windows were skipped). Exclusion is measured in ordinal distance.
pub fn folds_for(indices: &[usize], mode: FoldMode, k: usize, radius: usize) -> Result<Vec<Fold>> {
    let n = indices.len();
    if n < 2 * radius + 2 {
        return Err(Error::InsufficientData(format!(
            "{n} windows cannot form folds with exclusion radius {radius} (need {})",
            2 * radius + 2
        )));
    }
    let blocks: Vec<Vec<usize>> = match mode {
        FoldMode::Lowo => indices.iter().map(|&i| vec![i]).collect(),
        FoldMode::BlockKfold => {
            if k < 2 || k > n {
                return Err(Error::Config(format!(
                    "block k-fold needs 2 <= k <= {n}, got {k}"
                )));
            }
            (0..k)
                .map(|b| indices[b * n / k..(b + 1) * n / k].to_vec())
                .collect()
        }
    };
    let folds: Vec<Fold> = blocks
        .into_iter()
        .map(|test| {
            let (lo, hi) = (test[0], test[test.len() - 1]);
            let train = indices
                .iter()
                .copied()
                .filter(|&j| j + radius < lo || j > hi + radius)
                .collect();
            Fold { test, train }
        })
        .collect();
    if let Some(f) = folds.iter().find(|f| f.train.is_empty()) {
        return Err(Error::InsufficientData(format!(
            "fold testing window {} has no training windows",
            f.test[0]
        )));
    }
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn middle_fold() {
        let f = build_folds(10, 3).unwrap();
        assert_eq!(f[5].test, vec![5]);
        assert_eq!(f[5].train, vec![0, 1, 9]);
        assert_eq!(f[0].train, (4..10).collect::<Vec<_>>());
    }

    #[test]
    fn too_few_windows() {
        assert!(matches!(build_folds(7, 3), Err(Error::InsufficientData(_))));
        assert!(matches!(build_folds(1, 3), Err(Error::InsufficientData(_))));
        assert!(build_folds(8, 3).is_ok());
    }

    #[test]
    fn gaps_count_in_ordinal_distance() {
        let f = folds_for(&[0, 1, 2, 6, 7, 8, 9, 10], FoldMode::Lowo, 0, 3).unwrap();
        // testing 6 excludes 3..=9
        assert_eq!(f[3].train, vec![0, 1, 2, 10]);
    }

    #[test]
    fn block_kfold_trims_neighbours() {
        let idx: Vec<usize> = (0..20).collect();
        let f = folds_for(&idx, FoldMode::BlockKfold, 4, 3).unwrap();
        assert_eq!(f.len(), 4);
        assert_eq!(f[1].test, (5..10).collect::<Vec<_>>());
        assert_eq!(
            f[1].train,
            [0, 1].into_iter().chain(13..20).collect::<Vec<_>>()
        );
        let all: Vec<usize> = f.iter().flat_map(|f| f.test.clone()).collect();
        assert_eq!(all, idx);
    }
}
