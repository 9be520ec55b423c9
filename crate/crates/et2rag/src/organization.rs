//! Regroups a ranked retrieval result into the organized set of V
//! document subsets that condition the candidate generations.
//!
//! Three built-in strategy families plus an escape hatch:
//!
//! * `AnchorPair` — s_1 = {top_1}, s_i = {top_1, top_i} for i >= 2;
//!   every subset keeps the best document as an anchor.
//! * `Singleton` — s_i = {top_i}.
//! * `GroupedCombination` — groups of `group_size` documents drawn
//!   from the top `pool_size`, enumerated lexicographically over
//!   ascending rank tuples: {1,2,3,4}, {1,2,3,5}, ...
//! * `Explicit` — subsets given literally as rank lists, for
//!   reproducing any fixed published sequence.
//!
//! All strategies emit subsets in a quality-monotone order, so the
//! consensus tie-break toward the lowest subset index falls back to
//! the best-supported subset.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::retrieval::RetrievalResult;
use crate::types::Document;

/// One strategically chosen document combination; the unit of voting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganizedSubset {
    /// 1-based position in the organized set
    pub index: usize,
    pub documents: Vec<Document>,
}

impl OrganizedSubset {
    /// Sorted document ids, the stable signature used for mock
    /// script lookup.
    pub fn doc_id_signature(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.documents.iter().map(|d| d.id.clone()).collect();
        ids.sort();
        ids
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OrganizationStrategy {
    AnchorPair,
    Singleton,
    GroupedCombination { group_size: usize, pool_size: usize },
    Explicit { sets: Vec<Vec<usize>> },
}

impl OrganizationStrategy {
    pub fn validate(&self) -> Result<()> {
        match self {
            OrganizationStrategy::AnchorPair | OrganizationStrategy::Singleton => Ok(()),
            OrganizationStrategy::GroupedCombination {
                group_size,
                pool_size,
            } => {
                if *group_size == 0 || *pool_size == 0 {
                    return Err(Error::InvalidStrategy(
                        "group_size and pool_size must be positive".into(),
                    ));
                }
                if group_size > pool_size {
                    return Err(Error::InvalidStrategy(format!(
                        "group_size {group_size} exceeds pool_size {pool_size}"
                    )));
                }
                Ok(())
            }
            OrganizationStrategy::Explicit { sets } => {
                for (i, set) in sets.iter().enumerate() {
                    if set.is_empty() {
                        return Err(Error::InvalidStrategy(format!("explicit set {i} is empty")));
                    }
                    if set.iter().any(|&r| r == 0) {
                        return Err(Error::InvalidStrategy(format!(
                            "explicit set {i} references rank 0; ranks are 1-based"
                        )));
                    }
                    let mut sorted = set.clone();
                    sorted.sort_unstable();
                    sorted.dedup();
                    if sorted.len() != set.len() {
                        return Err(Error::InvalidStrategy(format!(
                            "explicit set {i} repeats a rank"
                        )));
                    }
                }
                Ok(())
            }
        }
    }

    fn name(&self) -> &'static str {
        match self {
            OrganizationStrategy::AnchorPair => "AnchorPair",
            OrganizationStrategy::Singleton => "Singleton",
            OrganizationStrategy::GroupedCombination { .. } => "GroupedCombination",
            OrganizationStrategy::Explicit { .. } => "Explicit",
        }
    }
}

/// The ordered set S of V subsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrganizedSet {
    pub subsets: Vec<OrganizedSubset>,
}

impl OrganizedSet {
    pub fn vote_size(&self) -> usize {
        self.subsets.len()
    }
}

fn doc_at_rank(result: &RetrievalResult, rank: usize) -> Document {
    result.documents[rank - 1].clone()
}

/// First `count` combinations of `group_size` ranks out of
/// 1..=pool_size, in lexicographic order of ascending rank tuples.
fn rank_combinations(pool_size: usize, group_size: usize, count: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::with_capacity(count);
    let mut current: Vec<usize> = (1..=group_size).collect();
    loop {
        if out.len() == count {
            break;
        }
        out.push(current.clone());
        // advance to the next combination
        let mut i = group_size;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if current[i] < pool_size - (group_size - 1 - i) {
                current[i] += 1;
                for j in i + 1..group_size {
                    current[j] = current[j - 1] + 1;
                }
                break;
            }
        }
    }
    out
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut result: usize = 1;
    for i in 0..k {
        result = result * (n - i) / (i + 1);
    }
    result
}

/// Builds the organized set of `vote_size` subsets from `result`.
pub fn organize(
    result: &RetrievalResult,
    strategy: &OrganizationStrategy,
    vote_size: usize,
) -> Result<OrganizedSet> {
    strategy.validate()?;
    if vote_size == 0 {
        return Err(Error::InvalidStrategy("vote_size must be >= 1".into()));
    }
    let available = result.documents.len();
    let insufficient = |needed: usize| Error::InsufficientDocuments {
        strategy: strategy.name().into(),
        needed,
        available,
    };

    let rank_sets: Vec<Vec<usize>> = match strategy {
        OrganizationStrategy::AnchorPair => {
            if available < vote_size {
                return Err(insufficient(vote_size));
            }
            (1..=vote_size)
                .map(|i| if i == 1 { vec![1] } else { vec![1, i] })
                .collect()
        }
        OrganizationStrategy::Singleton => {
            if available < vote_size {
                return Err(insufficient(vote_size));
            }
            (1..=vote_size).map(|i| vec![i]).collect()
        }
        OrganizationStrategy::GroupedCombination {
            group_size,
            pool_size,
        } => {
            if available < *pool_size {
                return Err(insufficient(*pool_size));
            }
            let total = binomial(*pool_size, *group_size);
            if total < vote_size {
                return Err(Error::InvalidStrategy(format!(
                    "only {total} groups of {group_size} exist in a pool of {pool_size}, \
                     vote_size {vote_size} requested"
                )));
            }
            rank_combinations(*pool_size, *group_size, vote_size)
        }
        OrganizationStrategy::Explicit { sets } => {
            if sets.len() < vote_size {
                return Err(Error::InvalidStrategy(format!(
                    "explicit strategy lists {} sets, vote_size {vote_size} requested",
                    sets.len()
                )));
            }
            let taken: Vec<Vec<usize>> = sets[..vote_size].to_vec();
            let max_rank = taken.iter().flatten().copied().max().unwrap_or(0);
            if available < max_rank {
                return Err(insufficient(max_rank));
            }
            taken
        }
    };

    let subsets = rank_sets
        .into_iter()
        .enumerate()
        .map(|(i, ranks)| OrganizedSubset {
            index: i + 1,
            documents: ranks.iter().map(|&r| doc_at_rank(result, r)).collect(),
        })
        .collect();

    Ok(OrganizedSet { subsets })
}

/// Largest vote size for which `organize` succeeds on a result of
/// `result_size` documents.
pub fn max_vote_size(result_size: usize, strategy: &OrganizationStrategy) -> usize {
    match strategy {
        OrganizationStrategy::AnchorPair | OrganizationStrategy::Singleton => result_size,
        OrganizationStrategy::GroupedCombination {
            group_size,
            pool_size,
        } => {
            if result_size < *pool_size {
                0
            } else {
                binomial(*pool_size, *group_size)
            }
        }
        OrganizationStrategy::Explicit { sets } => sets
            .iter()
            .take_while(|set| set.iter().all(|&r| r <= result_size))
            .count(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Document;

    fn result_with(n: usize) -> RetrievalResult {
        RetrievalResult {
            query_id: "q".into(),
            documents: (1..=n)
                .map(|i| Document {
                    id: format!("d{i:02}"),
                    text: format!("text {i}"),
                    score: 1.0 / i as f64,
                    rank: i,
                })
                .collect(),
        }
    }

    fn ranks(set: &OrganizedSet) -> Vec<Vec<usize>> {
        set.subsets
            .iter()
            .map(|s| s.documents.iter().map(|d| d.rank).collect())
            .collect()
    }

    #[test]
    fn anchor_pair_keeps_top1_everywhere() {
        let set = organize(&result_with(10), &OrganizationStrategy::AnchorPair, 3).unwrap();
        assert_eq!(ranks(&set), vec![vec![1], vec![1, 2], vec![1, 3]]);
        for subset in &set.subsets {
            assert!(subset.documents.iter().any(|d| d.rank == 1));
        }
    }

    #[test]
    fn singleton_takes_top_v() {
        let set = organize(&result_with(10), &OrganizationStrategy::Singleton, 3).unwrap();
        assert_eq!(ranks(&set), vec![vec![1], vec![2], vec![3]]);
    }

    #[test]
    fn grouped_combination_first_groups() {
        let strategy = OrganizationStrategy::GroupedCombination {
            group_size: 4,
            pool_size: 20,
        };
        let set = organize(&result_with(20), &strategy, 2).unwrap();
        assert_eq!(ranks(&set), vec![vec![1, 2, 3, 4], vec![1, 2, 3, 5]]);
    }

    #[test]
    fn explicit_reproduces_listed_sets() {
        let strategy = OrganizationStrategy::Explicit {
            sets: vec![vec![1, 2, 3, 4], vec![1, 2, 5, 6], vec![3, 4, 5, 6]],
        };
        let set = organize(&result_with(6), &strategy, 3).unwrap();
        assert_eq!(
            ranks(&set),
            vec![vec![1, 2, 3, 4], vec![1, 2, 5, 6], vec![3, 4, 5, 6]]
        );
    }

    #[test]
    fn insufficient_documents_names_shortfall() {
        let err = organize(&result_with(2), &OrganizationStrategy::AnchorPair, 5).unwrap_err();
        match err {
            Error::InsufficientDocuments {
                needed, available, ..
            } => {
                assert_eq!(needed, 5);
                assert_eq!(available, 2);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn max_vote_size_per_strategy() {
        assert_eq!(max_vote_size(10, &OrganizationStrategy::AnchorPair), 10);
        assert_eq!(max_vote_size(10, &OrganizationStrategy::Singleton), 10);
        let grouped = OrganizationStrategy::GroupedCombination {
            group_size: 4,
            pool_size: 20,
        };
        // C(20, 4) derived by the multiplicative binomial identity
        assert_eq!(max_vote_size(20, &grouped), 4845);
        assert_eq!(max_vote_size(19, &grouped), 0);
        let explicit = OrganizationStrategy::Explicit {
            sets: vec![vec![1], vec![1, 2], vec![5, 6]],
        };
        assert_eq!(max_vote_size(4, &explicit), 2);
    }

    #[test]
    fn organize_is_deterministic() {
        let strategy = OrganizationStrategy::GroupedCombination {
            group_size: 3,
            pool_size: 8,
        };
        let a = organize(&result_with(8), &strategy, 10).unwrap();
        let b = organize(&result_with(8), &strategy, 10).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn combination_enumeration_is_lexicographic() {
        let combos = rank_combinations(5, 3, 10);
        assert_eq!(
            combos,
            vec![
                vec![1, 2, 3],
                vec![1, 2, 4],
                vec![1, 2, 5],
                vec![1, 3, 4],
                vec![1, 3, 5],
                vec![1, 4, 5],
                vec![2, 3, 4],
                vec![2, 3, 5],
                vec![2, 4, 5],
                vec![3, 4, 5],
            ]
        );
    }

    #[test]
    fn no_duplicate_ids_within_subsets() {
        let strategy = OrganizationStrategy::GroupedCombination {
            group_size: 2,
            pool_size: 6,
        };
        let set = organize(&result_with(6), &strategy, 15).unwrap();
        for subset in &set.subsets {
            let mut ids = subset.doc_id_signature();
            ids.dedup();
            assert_eq!(ids.len(), subset.documents.len());
        }
    }

    #[test]
    fn explicit_rejects_rank_zero_and_duplicates() {
        assert!(OrganizationStrategy::Explicit { sets: vec![vec![0]] }
            .validate()
            .is_err());
        assert!(OrganizationStrategy::Explicit {
            sets: vec![vec![2, 2]]
        }
        .validate()
        .is_err());
    }
}
