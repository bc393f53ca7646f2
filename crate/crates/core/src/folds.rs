//! Fixed cross-fitting partitions.
//!
//! The fold plan is drawn once and held constant across every resample of a
//! run, so that null-statistic variation comes only from assignment draws.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::rng::AuditRng;
use crate::table::UnitTable;

/// What the fold split is stratified by, if anything.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratify {
    None,
    ByBlock,
    ByCluster,
}

impl std::fmt::Display for Stratify {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stratify::None => write!(f, "none"),
            Stratify::ByBlock => write!(f, "block"),
            Stratify::ByCluster => write!(f, "cluster"),
        }
    }
}

/// A fixed K-fold partition of the units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Per-unit fold index in 0..k, aligned to unit order.
    pub assignment: Vec<usize>,
    pub seed: u64,
    pub stratify: Stratify,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.assignment.len()
    }

    /// Unit indices inside fold `k`.
    pub fn fold_members(&self, fold: usize) -> Vec<usize> {
        (0..self.n())
            .filter(|&i| self.assignment[i] == fold)
            .collect()
    }
}

/// Deal units into K folds of sizes differing by at most one, optionally
/// balanced within each block or cluster. Deterministic in
/// `(units, k, seed, stratify)`.
pub fn make_folds(units: &UnitTable, k: usize, seed: u64, stratify: Stratify) -> Result<FoldPlan> {
    let n = units.n();
    if k < 2 {
        return Err(AuditError::Config(format!("fold count {k} < 2")));
    }
    if k > n {
        return Err(AuditError::Config(format!("fold count {k} > n = {n}")));
    }
    let groups: Vec<Vec<usize>> = match stratify {
        Stratify::None => vec![(0..n).collect()],
        Stratify::ByBlock => grouped(units.blocks(), units, "block")?,
        Stratify::ByCluster => grouped(units.clusters(), units, "cluster")?,
    };
    let mut rng = AuditRng::new(seed);
    let mut assignment = vec![0usize; n];
    let mut cursor = 0usize;
    for mut group in groups {
        rng.shuffle(&mut group);
        for i in group {
            assignment[i] = cursor % k;
            cursor += 1;
        }
    }
    Ok(FoldPlan {
        k,
        assignment,
        seed,
        stratify,
    })
}

fn grouped(
    labels: &[Option<String>],
    units: &UnitTable,
    role: &str,
) -> Result<Vec<Vec<usize>>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, label) in labels.iter().enumerate() {
        match label {
            Some(l) => groups.entry(l.as_str()).or_default().push(i),
            None => {
                return Err(AuditError::Config(format!(
                    "unit {} has no {role}-id; cannot stratify folds by {role}",
                    units.id(i)
                )))
            }
        }
    }
    Ok(groups.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::TableBuilder;

    fn table(n: usize) -> UnitTable {
        TableBuilder {
            ids: (0..n).map(|i| format!("u{i}")).collect(),
            features: (0..n).map(|i| vec![i as f64]).collect(),
            ..Default::default()
        }
        .build()
        .unwrap()
    }

    fn fold_sizes(plan: &FoldPlan) -> Vec<usize> {
        (0..plan.k).map(|f| plan.fold_members(f).len()).collect()
    }

    #[test]
    fn divisible_case() {
        let plan = make_folds(&table(10), 5, 1, Stratify::None).unwrap();
        assert_eq!(fold_sizes(&plan), vec![2; 5]);
    }

    #[test]
    fn balanced_within_one() {
        let plan = make_folds(&table(11), 5, 1, Stratify::None).unwrap();
        let mut sizes = fold_sizes(&plan);
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn deterministic() {
        let t = table(23);
        let a = make_folds(&t, 4, 9, Stratify::None).unwrap();
        let b = make_folds(&t, 4, 9, Stratify::None).unwrap();
        assert_eq!(a, b);
        let c = make_folds(&t, 4, 10, Stratify::None).unwrap();
        assert_ne!(a.assignment, c.assignment);
    }

    #[test]
    fn k_bounds() {
        assert!(make_folds(&table(4), 5, 0, Stratify::None).is_err());
        assert!(make_folds(&table(4), 1, 0, Stratify::None).is_err());
        assert!(make_folds(&table(4), 4, 0, Stratify::None).is_ok());
    }

    #[test]
    fn stratified_by_block_balances_blocks() {
        let n = 12;
        let t = TableBuilder {
            ids: (0..n).map(|i| format!("u{i}")).collect(),
            blocks: (0..n)
                .map(|i| Some(if i < 6 { "B1" } else { "B2" }.to_string()))
                .collect(),
            features: (0..n).map(|i| vec![i as f64]).collect(),
            ..Default::default()
        }
        .build()
        .unwrap();
        let plan = make_folds(&t, 3, 2, Stratify::ByBlock).unwrap();
        for block in ["B1", "B2"] {
            let per_fold: Vec<usize> = (0..3)
                .map(|f| {
                    (0..n)
                        .filter(|&i| {
                            plan.assignment[i] == f
                                && t.blocks()[i].as_deref() == Some(block)
                        })
                        .count()
                })
                .collect();
            let max = per_fold.iter().max().unwrap();
            let min = per_fold.iter().min().unwrap();
            assert!(max - min <= 1, "{per_fold:?}");
        }
    }

    #[test]
    fn every_fold_nonempty() {
        for n in 5..20 {
            let plan = make_folds(&table(n), 5, 3, Stratify::None).unwrap();
            for f in 0..5 {
                assert!(!plan.fold_members(f).is_empty());
            }
        }
    }
}
