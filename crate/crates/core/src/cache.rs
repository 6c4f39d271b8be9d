// SPDX-License-Identifier: Apache-2.0

//! Private L1i/L1d/L2 per physical core plus a shared, optionally sliced,
//! inclusive last-level cache. Lines are 64 bytes; sets are indexed by the
//! low bits of the line number.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, PhysAddr, LINE_SHIFT};
use crate::config::{CacheConfig, CacheLevelConfig, Replacement, SliceHash};
use crate::rng::SimRng;

/// Slice-selection masks for the four-slice hash (one parity bit each).
const SLICE_MASKS: [u64; 2] = [
    bits(&[6, 10, 12, 14, 16, 17, 18, 20, 22, 24, 25, 26, 27, 28, 30, 32, 33]),
    bits(&[7, 11, 13, 15, 17, 19, 20, 21, 22, 23, 24, 26, 28, 29, 31, 33, 34]),
];

const fn bits(list: &[u32]) -> u64 {
    let mut m = 0u64;
    let mut i = 0;
    while i < list.len() {
        m |= 1 << list[i];
        i += 1;
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HitLevel {
    L1,
    L2,
    L3,
    Memory,
}

/// LLC location of a physical address: (slice, set within the slice).
pub fn llc_set_of(pa: PhysAddr, cfg: &CacheConfig) -> (u32, u32) {
    let slice = match cfg.slice_hash {
        SliceHash::Single => 0,
        SliceHash::Xor => {
            let b0 = (pa.0 & SLICE_MASKS[0]).count_ones() & 1;
            let b1 = (pa.0 & SLICE_MASKS[1]).count_ones() & 1;
            b0 | (b1 << 1)
        }
    };
    let per_slice = cfg.l3.sets / cfg.llc_slices;
    let set = ((pa.0 >> LINE_SHIFT) % per_slice as u64) as u32;
    (slice, set)
}

/// One set-associative array of line addresses; index 0 of a set is LRU.
#[derive(Clone, Debug)]
pub struct CacheArray {
    sets: Vec<Vec<u64>>,
    ways: usize,
    latency: u64,
}

impl CacheArray {
    pub fn new(cfg: CacheLevelConfig, total_sets: u32) -> Self {
        CacheArray { sets: vec![Vec::new(); total_sets as usize], ways: cfg.ways as usize, latency: cfg.latency }
    }

    pub fn latency(&self) -> u64 {
        self.latency
    }

    fn hit(&mut self, set: usize, line: u64) -> bool {
        let ways = &mut self.sets[set];
        if let Some(pos) = ways.iter().position(|&l| l == line) {
            let l = ways.remove(pos);
            ways.push(l);
            true
        } else {
            false
        }
    }

    fn contains(&self, set: usize, line: u64) -> bool {
        self.sets[set].contains(&line)
    }

    fn fill(&mut self, set: usize, line: u64, policy: Replacement, rng: &mut SimRng) -> Option<u64> {
        let ways = &mut self.sets[set];
        if ways.contains(&line) {
            return None;
        }
        let evicted = if ways.len() >= self.ways {
            let idx = match policy {
                Replacement::Lru => 0,
                Replacement::Random => rng.random_range(0..ways.len()),
            };
            Some(ways.remove(idx))
        } else {
            None
        };
        ways.push(line);
        evicted
    }

    fn remove(&mut self, set: usize, line: u64) -> bool {
        let ways = &mut self.sets[set];
        if let Some(pos) = ways.iter().position(|&l| l == line) {
            ways.remove(pos);
            true
        } else {
            false
        }
    }

    pub fn resident(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn set_lines(&self, set: usize) -> &[u64] {
        &self.sets[set]
    }
}

#[derive(Clone, Debug)]
struct PrivateCaches {
    l1i: CacheArray,
    l1d: CacheArray,
    l2: CacheArray,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CacheOutcome {
    pub level: HitLevel,
    /// Lookup latency through the hierarchy; memory time is added by the
    /// DRAM model when `level` is `Memory`.
    pub latency: u64,
    /// Next line brought in by the prefetcher, which also touches DRAM.
    pub prefetched: Option<PhysAddr>,
}

#[derive(Clone, Debug)]
pub struct CacheState {
    cfg: CacheConfig,
    cores: Vec<PrivateCaches>,
    l3: CacheArray,
    rng: SimRng,
}

impl CacheState {
    pub fn new(cfg: &CacheConfig, cores: u32, rng: SimRng) -> Self {
        let private = PrivateCaches {
            l1i: CacheArray::new(cfg.l1i, cfg.l1i.sets),
            l1d: CacheArray::new(cfg.l1d, cfg.l1d.sets),
            l2: CacheArray::new(cfg.l2, cfg.l2.sets),
        };
        CacheState {
            cfg: cfg.clone(),
            cores: vec![private; cores as usize],
            l3: CacheArray::new(cfg.l3, cfg.l3.sets),
            rng,
        }
    }

    fn index(sets: u32, pa: PhysAddr) -> usize {
        ((pa.0 >> LINE_SHIFT) % sets as u64) as usize
    }

    fn l3_index(&self, pa: PhysAddr) -> usize {
        let (slice, set) = llc_set_of(pa, &self.cfg);
        (slice * (self.cfg.l3.sets / self.cfg.llc_slices) + set) as usize
    }

    /// Accesses a line from `core`. Fills every level on the way back and,
    /// for an inclusive LLC, back-invalidates lines the LLC evicts.
    pub fn access(&mut self, core: usize, pa: PhysAddr, kind: AccessKind) -> CacheOutcome {
        let line = pa.line().0;
        let cfg = &self.cfg;
        let (s1, s2) =
            (Self::index(if kind.is_code() { cfg.l1i.sets } else { cfg.l1d.sets }, pa), Self::index(cfg.l2.sets, pa));
        let s3 = self.l3_index(pa);
        let policy = cfg.replacement;
        let pc = &mut self.cores[core];
        let l1 = if kind.is_code() { &mut pc.l1i } else { &mut pc.l1d };
        let l1_lat = l1.latency;
        if l1.hit(s1, line) {
            return CacheOutcome { level: HitLevel::L1, latency: l1_lat, prefetched: None };
        }
        let l2_lat = l1_lat + pc.l2.latency;
        if pc.l2.hit(s2, line) {
            l1.fill(s1, line, policy, &mut self.rng);
            return CacheOutcome { level: HitLevel::L2, latency: l2_lat, prefetched: None };
        }
        let l3_lat = l2_lat + self.l3.latency;
        let level = if self.l3.hit(s3, line) { HitLevel::L3 } else { HitLevel::Memory };
        if level == HitLevel::Memory {
            self.fill_l3(line);
        }
        let pc = &mut self.cores[core];
        pc.l2.fill(s2, line, policy, &mut self.rng);
        let l1 = if kind.is_code() { &mut pc.l1i } else { &mut pc.l1d };
        l1.fill(s1, line, policy, &mut self.rng);
        let mut prefetched = None;
        if level == HitLevel::Memory && self.cfg.prefetch_next_line {
            let next = PhysAddr(line + (1 << LINE_SHIFT));
            if !self.in_llc(next) {
                self.fill_l3(next.0);
                prefetched = Some(next);
            }
        }
        CacheOutcome { level, latency: l3_lat, prefetched }
    }

    fn fill_l3(&mut self, line: u64) {
        let s3 = self.l3_index(PhysAddr(line));
        if let Some(ev) = self.l3.fill(s3, line, self.cfg.replacement, &mut self.rng) {
            if self.cfg.inclusive {
                self.drop_private(PhysAddr(ev));
            }
        }
    }

    fn drop_private(&mut self, pa: PhysAddr) {
        let line = pa.line().0;
        let (i1, id, i2) =
            (Self::index(self.cfg.l1i.sets, pa), Self::index(self.cfg.l1d.sets, pa), Self::index(self.cfg.l2.sets, pa));
        for pc in &mut self.cores {
            pc.l1i.remove(i1, line);
            pc.l1d.remove(id, line);
            pc.l2.remove(i2, line);
        }
    }

    /// Access from a core without private caches (other tenants'
    /// traffic). Returns true on an LLC hit.
    pub fn llc_access(&mut self, pa: PhysAddr) -> bool {
        let s3 = self.l3_index(pa);
        if self.l3.hit(s3, pa.line().0) {
            return true;
        }
        self.fill_l3(pa.line().0);
        false
    }

    /// `clflush`: removes the line from every level of every core.
    pub fn flush_line(&mut self, pa: PhysAddr) {
        let s3 = self.l3_index(pa);
        self.l3.remove(s3, pa.line().0);
        self.drop_private(pa);
    }

    pub fn in_llc(&self, pa: PhysAddr) -> bool {
        self.l3.contains(self.l3_index(pa), pa.line().0)
    }

    /// True if the line is in any private level of `core`.
    pub fn in_private(&self, core: usize, pa: PhysAddr) -> bool {
        let line = pa.line().0;
        let pc = &self.cores[core];
        pc.l1i.contains(Self::index(self.cfg.l1i.sets, pa), line)
            || pc.l1d.contains(Self::index(self.cfg.l1d.sets, pa), line)
            || pc.l2.contains(Self::index(self.cfg.l2.sets, pa), line)
    }

    /// Fills an LLC set with the attacker's eviction lines.
    pub fn prime(&mut self, core: usize, lines: &[PhysAddr]) {
        for &l in lines {
            self.access(core, l, AccessKind::DataRead);
        }
    }

    /// Re-touches the eviction lines and counts how many had left the LLC.
    pub fn probe(&mut self, core: usize, lines: &[PhysAddr]) -> u32 {
        lines.iter().map(|&l| u32::from(self.access(core, l, AccessKind::DataRead).level == HitLevel::Memory)).sum()
    }

    pub fn llc_resident(&self) -> usize {
        self.l3.resident()
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn state() -> CacheState {
        CacheState::new(&CacheConfig::default(), 2, stream_rng(0, 0))
    }

    fn same_set_lines(base: u64, n: u64) -> Vec<PhysAddr> {
        (0..n).map(|k| PhysAddr(base + k * (1 << 19))).collect()
    }

    #[test]
    fn llc_set_examples() {
        let c = CacheConfig::default();
        assert_eq!(llc_set_of(PhysAddr(0), &c), (0, 0));
        assert_eq!(llc_set_of(PhysAddr(0x1fc0), &c), (0, 0x7f));
        assert_eq!(llc_set_of(PhysAddr(0x1234_5678), &c).1, llc_set_of(PhysAddr(0x1234_5678 + (1 << 19)), &c).1);
    }

    #[test]
    fn reaccess_hits_l1() {
        let mut c = state();
        assert_eq!(c.access(0, PhysAddr(0x1000), AccessKind::DataRead).level, HitLevel::Memory);
        assert_eq!(c.access(0, PhysAddr(0x1008), AccessKind::DataRead).level, HitLevel::L1);
    }

    #[test]
    fn seventeen_lines_evict_first_and_back_invalidate() {
        let mut c = state();
        let lines = same_set_lines(0x40, 17);
        for &l in &lines {
            c.access(0, l, AccessKind::DataRead);
        }
        assert!(!c.in_llc(lines[0]));
        assert!(!c.in_private(0, lines[0]), "inclusive LLC drops private copies");
        assert!(lines[1..].iter().all(|&l| c.in_llc(l)));
    }

    #[test]
    fn flush_forces_memory() {
        let mut c = state();
        c.access(0, PhysAddr(0x2000), AccessKind::DataRead);
        c.flush_line(PhysAddr(0x2000));
        assert_eq!(c.access(0, PhysAddr(0x2000), AccessKind::DataRead).level, HitLevel::Memory);
        c.flush_line(PhysAddr(0x9_0000));
    }

    #[test]
    fn prime_probe_sees_victim() {
        let mut c = state();
        let ev = same_set_lines(0x80, 16);
        c.prime(1, &ev);
        assert_eq!(c.probe(1, &ev), 0);
        c.access(0, PhysAddr(0x80 + 40 * (1 << 19)), AccessKind::CodeFetch);
        assert!(c.probe(1, &ev) >= 1);
    }

    #[test]
    fn prefetcher_pulls_next_line() {
        let cfg = CacheConfig { prefetch_next_line: true, ..CacheConfig::default() };
        let mut c = CacheState::new(&cfg, 1, stream_rng(0, 0));
        let out = c.access(0, PhysAddr(0x3000), AccessKind::DataRead);
        assert_eq!(out.prefetched, Some(PhysAddr(0x3040)));
        assert!(c.in_llc(PhysAddr(0x3040)));
    }

    #[test]
    fn xor_slices_spread_lines() {
        let cfg = CacheConfig { llc_slices: 4, slice_hash: SliceHash::Xor, ..CacheConfig::default() };
        let mut seen = [0u32; 4];
        for k in 0..1024u64 {
            let (s, set) = llc_set_of(PhysAddr(k << 17), &cfg);
            assert!(set < 2048);
            seen[s as usize] += 1;
        }
        assert!(seen.iter().all(|&n| n > 0));
    }
}
