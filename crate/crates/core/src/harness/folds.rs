// SPDX-License-Identifier: MIT OR Apache-2.0

//! Cross-validation splits.

use std::collections::BTreeMap;
use std::hash::Hash;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FoldError {
    #[error("k must be at least 2, got {0}")]
    BadK(usize),
    #[error("class {class:?} has {size} members, fewer than k = {k}")]
    SmallClass { class: String, size: usize, k: usize },
    #[error("{groups} distinct groups cannot fill k = {k} folds")]
    TooFewGroups { groups: usize, k: usize },
    #[error("two-group swap needs exactly 2 classes, found {0}: {1:?}")]
    NotTwoClasses(usize, Vec<String>),
    #[error("{0}")]
    Scheme(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FoldKind {
    StratifiedK,
    GroupK,
    TwoGroupSwap,
}

fn default_k() -> usize {
    6
}

/// JSON: `{"kind": "group_k", "k": 6, "group_key": "object", "seed": 0}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldScheme {
    pub kind: FoldKind,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Group name for `group_k` and `two_group_swap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_key: Option<String>,
    #[serde(default)]
    pub seed: u64,
}

impl FoldScheme {
    pub fn stratified(k: usize, seed: u64) -> Self {
        Self {
            kind: FoldKind::StratifiedK,
            k,
            group_key: None,
            seed,
        }
    }

    pub fn grouped(k: usize, group_key: &str, seed: u64) -> Self {
        Self {
            kind: FoldKind::GroupK,
            k,
            group_key: Some(group_key.into()),
            seed,
        }
    }

    pub fn two_group_swap(group_key: &str) -> Self {
        Self {
            kind: FoldKind::TwoGroupSwap,
            k: 2,
            group_key: Some(group_key.into()),
            seed: 0,
        }
    }

    pub fn check(&self) -> Result<(), FoldError> {
        if self.kind != FoldKind::TwoGroupSwap && self.k < 2 {
            return Err(FoldError::BadK(self.k));
        }
        if self.kind != FoldKind::StratifiedK && self.group_key.is_none() {
            return Err(FoldError::Scheme(format!("{:?} needs a group_key", self.kind)));
        }
        Ok(())
    }
}

/// Row indices of one train/test split, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Turns a fold assignment into `k` splits; fold `f` is the test set of split `f`.
pub fn splits_from_assignment(assign: &[usize], k: usize) -> Vec<Split> {
    (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..assign.len()).partition(|&i| assign[i] == f);
            Split { train, test }
        })
        .collect()
}

fn members_by_class<K: Ord + Clone>(classes: &[K]) -> BTreeMap<K, Vec<usize>> {
    let mut out: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, c) in classes.iter().enumerate() {
        out.entry(c.clone()).or_default().push(i);
    }
    out
}

/// Stratified assignment: each class is shuffled and dealt round-robin, and
/// the deal continues across classes so fold sizes differ by at most one.
pub fn stratified_folds<K: Ord + Clone + std::fmt::Debug>(
    classes: &[K],
    k: usize,
    seed: u64,
) -> Result<Vec<usize>, FoldError> {
    if k < 2 {
        return Err(FoldError::BadK(k));
    }
    let by_class = members_by_class(classes);
    for (c, m) in &by_class {
        if m.len() < k {
            return Err(FoldError::SmallClass {
                class: format!("{c:?}"),
                size: m.len(),
                k,
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assign = vec![0; classes.len()];
    let mut next = 0;
    for mut m in by_class.into_values() {
        m.shuffle(&mut rng);
        for i in m {
            assign[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(assign)
}

/// Group assignment: groups are visited largest first (seeded order among
/// equal sizes) and each goes to the currently smallest fold.
pub fn group_folds<G: Ord + Clone + Hash>(groups: &[G], k: usize, seed: u64) -> Result<Vec<usize>, FoldError> {
    if k < 2 {
        return Err(FoldError::BadK(k));
    }
    let mut by_group: Vec<Vec<usize>> = members_by_class(groups).into_values().collect();
    if by_group.len() < k {
        return Err(FoldError::TooFewGroups {
            groups: by_group.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    by_group.shuffle(&mut rng);
    by_group.sort_by_key(|m| std::cmp::Reverse(m.len()));
    let mut sizes = vec![0usize; k];
    let mut assign = vec![0; groups.len()];
    for m in by_group {
        let f = (0..k).min_by_key(|&f| sizes[f]).expect("k >= 2");
        sizes[f] += m.len();
        for i in m {
            assign[i] = f;
        }
    }
    Ok(assign)
}

/// Train on one class and test on the other, then the reverse. Classes are
/// taken in sorted order.
pub fn two_group_swap<K: Ord + Clone + std::fmt::Debug>(classes: &[K]) -> Result<[Split; 2], FoldError> {
    let by_class = members_by_class(classes);
    if by_class.len() != 2 {
        return Err(FoldError::NotTwoClasses(
            by_class.len(),
            by_class.keys().map(|c| format!("{c:?}")).collect(),
        ));
    }
    let mut it = by_class.into_values();
    let a = it.next().expect("two classes");
    let b = it.next().expect("two classes");
    Ok([
        Split {
            train: a.clone(),
            test: b.clone(),
        },
        Split { train: b, test: a },
    ])
}
