// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::addr::VirtPage;
use crate::victims::hunspell::DictionaryLayout;

/// What an attacker sees of one lookup.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Channel {
    /// Ordered page transitions.
    PageFaultSequence,
    /// Unordered set of pages touched.
    BspmPageSets,
}

/// Words grouped by identical observable signature.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignaturePartition {
    groups: BTreeMap<Vec<VirtPage>, Vec<usize>>,
}

impl SignaturePartition {
    pub fn from_signatures(sigs: impl IntoIterator<Item = Vec<VirtPage>>) -> Self {
        let mut groups: BTreeMap<Vec<VirtPage>, Vec<usize>> = BTreeMap::new();
        for (w, s) in sigs.into_iter().enumerate() {
            groups.entry(s).or_default().push(w);
        }
        SignaturePartition { groups }
    }

    pub fn groups(&self) -> impl Iterator<Item = &[usize]> {
        self.groups.values().map(|v| v.as_slice())
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    pub fn secrets(&self) -> usize {
        self.groups.values().map(Vec::len).sum()
    }

    /// Secrets in groups of size 1.
    pub fn unique_count(&self) -> usize {
        self.groups.values().filter(|g| g.len() == 1).count()
    }

    /// Group size to number of secrets in groups of that size.
    pub fn size_histogram(&self) -> BTreeMap<usize, usize> {
        let mut h = BTreeMap::new();
        for g in self.groups.values() {
            *h.entry(g.len()).or_default() += g.len();
        }
        h
    }

    /// True if every group here lies inside one group of `coarser`.
    pub fn refines(&self, coarser: &SignaturePartition) -> bool {
        let mut owner = BTreeMap::new();
        for (i, g) in coarser.groups.values().enumerate() {
            for &w in g {
                owner.insert(w, i);
            }
        }
        self.groups.values().all(|g| {
            let first = owner.get(&g[0]);
            first.is_some() && g.iter().all(|w| owner.get(w) == first)
        })
    }
}

pub fn signature_partition(dict: &DictionaryLayout, channel: Channel) -> SignaturePartition {
    let sig = |w| match channel {
        Channel::PageFaultSequence => dict.page_list(w),
        Channel::BspmPageSets => dict.page_set(w).into_iter().collect(),
    };
    SignaturePartition::from_signatures((0..dict.words.len()).map(sig))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_visible_only_to_page_faults() {
        let pf = SignaturePartition::from_signatures([vec![1, 2], vec![2, 1], vec![3]]);
        let bspm = SignaturePartition::from_signatures([vec![1, 2], vec![1, 2], vec![3]]);
        assert_eq!((pf.unique_count(), bspm.unique_count()), (3, 1));
        assert!(pf.refines(&bspm));
        assert!(!bspm.refines(&pf));
        assert_eq!(bspm.size_histogram(), BTreeMap::from([(1, 1), (2, 2)]));
    }

    #[test]
    fn distinct_layout_all_unique() {
        let sigs = (0..50u64).map(|w| vec![w]);
        let p = SignaturePartition::from_signatures(sigs);
        assert_eq!(p.unique_count(), 50);
    }

    #[test]
    fn synthetic_dictionary_matches_enumeration() {
        let d = DictionaryLayout::generate(1000, 64, 256, 0x200, 42).unwrap();
        let pf = signature_partition(&d, Channel::PageFaultSequence);
        let bs = signature_partition(&d, Channel::BspmPageSets);
        assert_eq!(pf.secrets(), 1000);
        assert!(pf.unique_count() >= bs.unique_count());
        assert!(pf.refines(&bs));
        let mut oracle: Vec<(Vec<VirtPage>, usize)> = (0..1000).map(|w| (d.page_list(w), w)).collect();
        oracle.sort();
        let unique = (0..oracle.len())
            .filter(|&i| {
                (i == 0 || oracle[i - 1].0 != oracle[i].0) && (i + 1 == oracle.len() || oracle[i + 1].0 != oracle[i].0)
            })
            .count();
        assert_eq!(pf.unique_count(), unique);
    }
}
