// SPDX-License-Identifier: Apache-2.0

//! Set-associative multi-level TLBs.
//!
//! Split L1 (iTLB for fetches, dTLB for data) backed by a unified second
//! level (STLB). Set indices are the low bits of the virtual page number:
//! bits 12..15 of the address pick the dTLB set, bits 12..14 the iTLB set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, PhysFrame, VirtPage};
use crate::config::{Geometry, Replacement, TlbConfig};
use crate::rng::SimRng;

pub type Pcid = u16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TlbLevel {
    Itlb,
    Dtlb,
    Stlb,
}

impl TlbLevel {
    pub fn l1_for(kind: AccessKind) -> TlbLevel {
        if kind.is_code() {
            TlbLevel::Itlb
        } else {
            TlbLevel::Dtlb
        }
    }

    pub fn geometry(self, cfg: &TlbConfig) -> Geometry {
        match self {
            TlbLevel::Itlb => cfg.itlb,
            TlbLevel::Dtlb => cfg.dtlb,
            TlbLevel::Stlb => cfg.stlb,
        }
    }
}

pub fn tlb_set_index(vpn: VirtPage, level: TlbLevel, cfg: &TlbConfig) -> u32 {
    (vpn % level.geometry(cfg).sets as u64) as u32
}

/// `count` distinct pages at or above `region_base` that all share the
/// set of `target_vpn` at `level`.
pub fn eviction_set_in(
    region_base: VirtPage,
    target_vpn: VirtPage,
    level: TlbLevel,
    count: usize,
    cfg: &TlbConfig,
) -> Vec<VirtPage> {
    let sets = level.geometry(cfg).sets as u64;
    let want = target_vpn % sets;
    let mut first = region_base - region_base % sets + want;
    if first < region_base {
        first += sets;
    }
    (0..count as u64).map(|k| first + k * sets).collect()
}

/// Eviction set starting at the lowest page of the target's set.
pub fn build_tlb_eviction_set(target_vpn: VirtPage, level: TlbLevel, count: usize, cfg: &TlbConfig) -> Vec<VirtPage> {
    eviction_set_in(0, target_vpn, level, count, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TlbEntry {
    pub vpn: VirtPage,
    pub pcid: Pcid,
    pub frame: PhysFrame,
    pub nx: bool,
    pub global: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlushScope {
    All,
    /// Entries tagged with this PCID plus global entries.
    Pcid(Pcid),
}

/// One set-associative array. Within a set, index 0 is least recently used.
#[derive(Clone, Debug)]
pub struct TlbArray {
    geometry: Geometry,
    sets: Vec<Vec<TlbEntry>>,
}

impl TlbArray {
    pub fn new(geometry: Geometry) -> Self {
        TlbArray { geometry, sets: vec![Vec::with_capacity(geometry.ways as usize); geometry.sets as usize] }
    }

    fn set_of(&self, vpn: VirtPage) -> usize {
        (vpn % self.geometry.sets as u64) as usize
    }

    pub fn lookup(&mut self, vpn: VirtPage, pcid: Pcid) -> Option<TlbEntry> {
        let set = self.set_of(vpn);
        let ways = &mut self.sets[set];
        let pos = ways.iter().position(|e| e.vpn == vpn && (e.pcid == pcid || e.global))?;
        let e = ways.remove(pos);
        ways.push(e);
        Some(e)
    }

    pub fn contains(&self, vpn: VirtPage, pcid: Pcid) -> bool {
        self.sets[self.set_of(vpn)].iter().any(|e| e.vpn == vpn && (e.pcid == pcid || e.global))
    }

    /// Inserts (or refreshes) an entry; returns the evicted victim, if any.
    pub fn insert(&mut self, entry: TlbEntry, policy: Replacement, rng: &mut SimRng) -> Option<TlbEntry> {
        let set = self.set_of(entry.vpn);
        let ways_max = self.geometry.ways as usize;
        let ways = &mut self.sets[set];
        if let Some(pos) = ways.iter().position(|e| e.vpn == entry.vpn && e.pcid == entry.pcid) {
            ways.remove(pos);
            ways.push(entry);
            return None;
        }
        let evicted = if ways.len() >= ways_max {
            let idx = match policy {
                Replacement::Lru => 0,
                Replacement::Random => rng.random_range(0..ways.len()),
            };
            Some(ways.remove(idx))
        } else {
            None
        };
        ways.push(entry);
        evicted
    }

    pub fn invalidate(&mut self, vpn: VirtPage, pcid: Pcid) {
        let set = self.set_of(vpn);
        self.sets[set].retain(|e| !(e.vpn == vpn && e.pcid == pcid));
    }

    pub fn flush(&mut self, scope: FlushScope) {
        for ways in &mut self.sets {
            match scope {
                FlushScope::All => ways.clear(),
                FlushScope::Pcid(p) => ways.retain(|e| e.pcid != p && !e.global),
            }
        }
    }

    pub fn len(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn set_entries(&self, set: u32) -> &[TlbEntry] {
        &self.sets[set as usize]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TlbHit {
    L1,
    L2,
    Miss,
}

/// All TLB levels of one logical (or shared physical) core.
#[derive(Clone, Debug)]
pub struct TlbState {
    pub itlb: TlbArray,
    pub dtlb: TlbArray,
    pub stlb: TlbArray,
    policy: Replacement,
    rng: SimRng,
}

impl TlbState {
    pub fn new(cfg: &TlbConfig, rng: SimRng) -> Self {
        TlbState {
            itlb: TlbArray::new(cfg.itlb),
            dtlb: TlbArray::new(cfg.dtlb),
            stlb: TlbArray::new(cfg.stlb),
            policy: cfg.replacement,
            rng,
        }
    }

    pub fn level(&self, level: TlbLevel) -> &TlbArray {
        match level {
            TlbLevel::Itlb => &self.itlb,
            TlbLevel::Dtlb => &self.dtlb,
            TlbLevel::Stlb => &self.stlb,
        }
    }

    fn l1_mut(&mut self, kind: AccessKind) -> &mut TlbArray {
        if kind.is_code() {
            &mut self.itlb
        } else {
            &mut self.dtlb
        }
    }

    /// Looks up L1 then STLB. An STLB hit refills the L1 array.
    pub fn lookup(&mut self, vpn: VirtPage, pcid: Pcid, kind: AccessKind) -> (TlbHit, Option<TlbEntry>) {
        if let Some(e) = self.l1_mut(kind).lookup(vpn, pcid) {
            return (TlbHit::L1, Some(e));
        }
        if let Some(e) = self.stlb.lookup(vpn, pcid) {
            let l1 = if kind.is_code() { &mut self.itlb } else { &mut self.dtlb };
            l1.insert(e, self.policy, &mut self.rng);
            return (TlbHit::L2, Some(e));
        }
        (TlbHit::Miss, None)
    }

    /// Fills both the L1 array for `kind` and the STLB after a walk.
    pub fn insert(&mut self, entry: TlbEntry, kind: AccessKind) {
        let policy = self.policy;
        if kind.is_code() {
            self.itlb.insert(entry, policy, &mut self.rng);
        } else {
            self.dtlb.insert(entry, policy, &mut self.rng);
        }
        self.stlb.insert(entry, policy, &mut self.rng);
    }

    pub fn flush(&mut self, scope: FlushScope) {
        self.itlb.flush(scope);
        self.dtlb.flush(scope);
        self.stlb.flush(scope);
    }

    pub fn invalidate(&mut self, vpn: VirtPage, pcid: Pcid) {
        self.itlb.invalidate(vpn, pcid);
        self.dtlb.invalidate(vpn, pcid);
        self.stlb.invalidate(vpn, pcid);
    }

    pub fn contains(&self, vpn: VirtPage, pcid: Pcid) -> bool {
        self.itlb.contains(vpn, pcid) || self.dtlb.contains(vpn, pcid) || self.stlb.contains(vpn, pcid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn cfg() -> TlbConfig {
        TlbConfig::default()
    }

    fn entry(vpn: u64, pcid: Pcid) -> TlbEntry {
        TlbEntry { vpn, pcid, frame: vpn + 1000, nx: false, global: false }
    }

    #[test]
    fn set_index_examples() {
        let c = cfg();
        assert_eq!(tlb_set_index(0x7000 >> 12, TlbLevel::Dtlb, &c), 7);
        assert_eq!(tlb_set_index(0x9000 >> 12, TlbLevel::Itlb, &c), 1);
        assert_eq!(tlb_set_index(0x3000 >> 12, TlbLevel::Dtlb, &c), tlb_set_index(0x13000 >> 12, TlbLevel::Dtlb, &c));
        assert_eq!(tlb_set_index(130, TlbLevel::Stlb, &c), 2);
    }

    #[test]
    fn eviction_set_stride() {
        assert_eq!(build_tlb_eviction_set(5, TlbLevel::Dtlb, 4, &cfg()), vec![5, 21, 37, 53]);
        let s = eviction_set_in(0x1000, 5, TlbLevel::Dtlb, 4, &cfg());
        assert!(s.iter().all(|&p| p >= 0x1000 && p % 16 == 5));
    }

    #[test]
    fn contiguous_pages_partition_into_itlb_sets() {
        let c = cfg();
        let mut counts = [0u32; 8];
        for vpn in 0x400..0x480u64 {
            counts[tlb_set_index(vpn, TlbLevel::Itlb, &c) as usize] += 1;
        }
        assert_eq!(counts, [16; 8]);
    }

    #[test]
    fn lru_evicts_first_inserted() {
        let mut rng = stream_rng(0, 0);
        let mut a = TlbArray::new(Geometry::new(16, 4));
        for k in 0..4 {
            assert!(a.insert(entry(3 + 16 * k, 1), Replacement::Lru, &mut rng).is_none());
        }
        let ev = a.insert(entry(3 + 64, 1), Replacement::Lru, &mut rng).unwrap();
        assert_eq!(ev.vpn, 3);
    }

    #[test]
    fn pcid_flush_keeps_other_contexts() {
        let mut t = TlbState::new(&cfg(), stream_rng(0, 0));
        t.insert(entry(1, 1), AccessKind::DataRead);
        t.insert(entry(2, 2), AccessKind::DataRead);
        t.insert(TlbEntry { global: true, ..entry(3, 2) }, AccessKind::DataRead);
        t.flush(FlushScope::Pcid(1));
        assert!(!t.contains(1, 1));
        assert!(t.contains(2, 2));
        assert!(!t.contains(3, 2), "global entries go with a PCID flush");
        t.flush(FlushScope::All);
        assert!(!t.contains(2, 2));
    }

    #[test]
    fn stlb_hit_refills_l1() {
        let mut t = TlbState::new(&cfg(), stream_rng(0, 0));
        t.insert(entry(5, 1), AccessKind::DataRead);
        t.dtlb.flush(FlushScope::All);
        assert_eq!(t.lookup(5, 1, AccessKind::DataRead).0, TlbHit::L2);
        assert_eq!(t.lookup(5, 1, AccessKind::DataRead).0, TlbHit::L1);
    }

    #[test]
    fn eviction_set_displaces_victim_entry() {
        let c = cfg();
        let mut t = TlbState::new(&c, stream_rng(0, 0));
        t.insert(entry(5, 1), AccessKind::DataRead);
        for p in eviction_set_in(0x2000, 5, TlbLevel::Dtlb, 4, &c) {
            if t.lookup(p, 2, AccessKind::DataRead).0 == TlbHit::Miss {
                t.insert(entry(p, 2), AccessKind::DataRead);
            }
        }
        assert!(!t.dtlb.contains(5, 1));
    }
}
