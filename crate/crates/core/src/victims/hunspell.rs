// SPDX-License-Identifier: Apache-2.0

//! Dictionary lookups over a chained hash table whose nodes and word
//! strings are spread across pages.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{VirtAddr, VirtPage, LINE_SIZE, PAGE_SIZE};
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, SimRng};
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const TRIGGER: &str = "trigger";
pub const DICT: &str = "dict";

const BUCKET_BYTES: u64 = 8;
const HASH_COST: u64 = 500;
const NODE_COST: u64 = 120;
const STRCMP_COST: u64 = 200;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordEntry {
    pub bucket: u32,
    pub node: VirtAddr,
    pub string: VirtAddr,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryLayout {
    pub base: VirtPage,
    pub buckets: u32,
    pub pages: u64,
    pub words: Vec<WordEntry>,
    /// Word ids per bucket in chain order.
    pub chains: Vec<Vec<u32>>,
}

impl DictionaryLayout {
    /// Random layout of `words` entries over `pages` dictionary pages
    /// starting at `base`; bucket heads take the first pages.
    pub fn generate(words: usize, pages: u64, buckets: u32, base: VirtPage, seed: u64) -> Result<Self> {
        let bucket_pages = (buckets as u64 * BUCKET_BYTES).div_ceil(PAGE_SIZE);
        if buckets == 0 || pages <= bucket_pages {
            return Err(SimError::BadParam(format!("{pages} pages cannot hold {buckets} buckets and nodes")));
        }
        let mut rng = stream_rng(seed, crate::rng::streams::VICTIM_GEN);
        let line = |rng: &mut SimRng| {
            let p = base + rng.random_range(bucket_pages..pages);
            VirtAddr::from_page(p, rng.random_range(0..PAGE_SIZE / LINE_SIZE) * LINE_SIZE)
        };
        let mut chains = vec![Vec::new(); buckets as usize];
        let mut entries = Vec::with_capacity(words);
        for id in 0..words {
            let bucket = rng.random_range(0..buckets);
            let node = line(&mut rng);
            let string = line(&mut rng);
            chains[bucket as usize].push(id as u32);
            entries.push(WordEntry { bucket, node, string });
        }
        Ok(DictionaryLayout { base, buckets, pages, words: entries, chains })
    }

    pub fn dict_pages(&self) -> Vec<VirtPage> {
        (self.base..self.base + self.pages).collect()
    }

    fn bucket_addr(&self, bucket: u32) -> VirtAddr {
        VirtAddr(self.base * PAGE_SIZE + bucket as u64 * BUCKET_BYTES)
    }

    /// Addresses read while looking up `word`: its bucket head, then node
    /// and string of every chain entry up to and including the word.
    pub fn lookup_addrs(&self, word: usize) -> Vec<VirtAddr> {
        let e = &self.words[word];
        let mut out = vec![self.bucket_addr(e.bucket)];
        for &id in &self.chains[e.bucket as usize] {
            let n = &self.words[id as usize];
            out.push(n.node);
            out.push(n.string);
            if id as usize == word {
                break;
            }
        }
        out
    }

    /// Ordered page visits, with repeats of the current page folded.
    pub fn page_list(&self, word: usize) -> Vec<VirtPage> {
        let mut out: Vec<VirtPage> = Vec::new();
        for a in self.lookup_addrs(word) {
            if out.last() != Some(&a.page()) {
                out.push(a.page());
            }
        }
        out
    }

    pub fn page_set(&self, word: usize) -> BTreeSet<VirtPage> {
        self.lookup_addrs(word).iter().map(|a| a.page()).collect()
    }

    pub fn victim_layout(&self) -> VictimLayout {
        let mut l = VictimLayout::new(self.base - 1, self.pages + 1);
        l.symbols.insert(TRIGGER.into(), VirtAddr::from_page(self.base - 1, 0x200));
        l.groups.insert(DICT.into(), self.dict_pages());
        l
    }
}

/// Steps of one lookup: the trigger read, hashing, then the chain walk.
pub fn hunspell_lookup(word: usize, dict: &DictionaryLayout) -> Vec<Step> {
    let trigger = VirtAddr::from_page(dict.base - 1, 0x200);
    let mut steps = vec![Step::read(0, trigger)];
    for (i, a) in dict.lookup_addrs(word).into_iter().enumerate() {
        let c = match i {
            0 => HASH_COST,
            i if i % 2 == 1 => NODE_COST,
            _ => STRCMP_COST,
        };
        steps.push(Step::read(c, a));
    }
    steps
}

/// A run of lookups separated by gaps drawn uniformly from `gap`.
pub fn hunspell_session(
    queries: &[usize],
    dict: &DictionaryLayout,
    gap: (u64, u64),
    seed: u64,
) -> Result<VictimProgram> {
    if queries.is_empty() {
        return Err(SimError::EmptyVictim);
    }
    let mut rng = stream_rng(seed, crate::rng::streams::VICTIM_GEN + 10);
    let mut steps = Vec::new();
    for (i, &w) in queries.iter().enumerate() {
        if w >= dict.words.len() {
            return Err(SimError::BadParam(format!("word id {w} outside dictionary")));
        }
        steps.push(Step::compute(rng.random_range(gap.0..=gap.1)));
        let mut s = hunspell_lookup(w, dict);
        s[0].mark = Some(Mark::Begin(i as u32));
        s.last_mut().expect("lookup is nonempty").mark = Some(Mark::End(i as u32));
        steps.extend(s);
    }
    Ok(VictimProgram {
        name: "hunspell".into(),
        layout: dict.victim_layout(),
        steps,
        secret: Secret::new(Truth::Words {
            words: queries.to_vec(),
            page_sets: queries.iter().map(|&w| dict.page_set(w)).collect(),
        }),
    })
}
