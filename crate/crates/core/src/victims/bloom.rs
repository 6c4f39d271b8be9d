// SPDX-License-Identifier: Apache-2.0

//! Bloom-filter membership test whose hash code sits on one page.

use rand::Rng;

use crate::addr::VirtAddr;
use crate::error::{Result, SimError};
use crate::rng::stream_rng;
use crate::victims::{Mark, Secret, Step, Truth, VictimLayout, VictimProgram};

pub const HASHES: usize = 10;
pub const HASH_PAGE: &str = "hash";
pub const EXIT_PAGE: &str = "exit";
pub const HASH_COST: u64 = 400;
const EXIT_COST: u64 = 150;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BloomFilter {
    bits: Vec<bool>,
    salt: u64,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl BloomFilter {
    pub fn new(size: usize, salt: u64) -> Self {
        BloomFilter { bits: vec![false; size], salt }
    }

    /// Sized for a fill ratio near one half after `n` insertions.
    pub fn for_members(members: &[u64], salt: u64) -> Self {
        let size = ((HASHES * members.len()) as f64 / std::f64::consts::LN_2).ceil().max(1.0) as usize;
        let mut f = BloomFilter::new(size, salt);
        for &m in members {
            f.insert(m);
        }
        f
    }

    fn position(&self, x: u64, i: usize) -> usize {
        (mix(x ^ mix(self.salt.wrapping_add(i as u64))) % self.bits.len() as u64) as usize
    }

    pub fn insert(&mut self, x: u64) {
        for i in 0..HASHES {
            let p = self.position(x, i);
            self.bits[p] = true;
        }
    }

    /// Hashes evaluated before the answer is known.
    pub fn hashes_run(&self, x: u64) -> usize {
        (0..HASHES).position(|i| !self.bits[self.position(x, i)]).map_or(HASHES, |i| i + 1)
    }

    pub fn contains(&self, x: u64) -> bool {
        (0..HASHES).all(|i| self.bits[self.position(x, i)])
    }

    pub fn fill_ratio(&self) -> f64 {
        self.bits.iter().filter(|&&b| b).count() as f64 / self.bits.len() as f64
    }
}

/// Expected hashes for a random non-member when a fraction `rho` of the
/// bits is set.
pub fn expected_hashes(rho: f64) -> f64 {
    (1..=HASHES).map(|i| rho.powi(i as i32 - 1)).sum()
}

pub fn default_layout() -> VictimLayout {
    let mut l = VictimLayout::new(0x300, 2);
    l.symbols.insert(HASH_PAGE.into(), VirtAddr(0x300_000));
    l.symbols.insert(EXIT_PAGE.into(), VirtAddr(0x301_400));
    l
}

/// Steps of one query: one burst per hash on the hash page, then the exit
/// page.
pub fn bloom_query(x: u64, filter: &BloomFilter, layout: &VictimLayout) -> Result<Vec<Step>> {
    let h = layout.symbol(HASH_PAGE)?;
    let e = layout.symbol(EXIT_PAGE)?;
    let k = filter.hashes_run(x);
    let mut steps: Vec<Step> = (0..k).map(|i| Step::fetch(HASH_COST, VirtAddr(h.0 + 64 * i as u64))).collect();
    steps.push(Step::fetch(EXIT_COST, e));
    Ok(steps)
}

/// Queries separated by random gaps. The truth records membership.
pub fn bloom_session(
    queries: &[u64],
    filter: &BloomFilter,
    layout: &VictimLayout,
    gap: (u64, u64),
    seed: u64,
) -> Result<VictimProgram> {
    if queries.is_empty() {
        return Err(SimError::EmptyVictim);
    }
    let mut rng = stream_rng(seed, crate::rng::streams::VICTIM_GEN + 20);
    let mut steps = Vec::new();
    for (i, &x) in queries.iter().enumerate() {
        steps.push(Step::compute(rng.random_range(gap.0..=gap.1)));
        let mut s = bloom_query(x, filter, layout)?;
        s[0].mark = Some(Mark::Begin(i as u32));
        s.last_mut().expect("query nonempty").mark = Some(Mark::End(i as u32));
        steps.extend(s);
    }
    Ok(VictimProgram {
        name: "bloom".into(),
        layout: layout.clone(),
        steps,
        secret: Secret::new(Truth::Members(queries.iter().map(|&x| filter.contains(x)).collect())),
    })
}
