// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, PhysAddr, PhysFrame, VirtAddr, VirtPage, PAGE_SHIFT};
use crate::attacks::{Placement, SmuggledClock};
use crate::cache::{CacheState, HitLevel};
use crate::config::{LogLevel, SimConfig, TlbSharing};
use crate::dram::{DramState, RowOutcome};
use crate::engine::log::{EventKind, EventLog};
use crate::engine::{ActorId, Cycle, VICTIM_ID};
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, streams, SimRng};
use crate::tlb::{Pcid, TlbHit, TlbState};
use crate::translation::{aex, translate, AddressSpace, AexCounter, AexReason, FlagReading, FlagSel, Trap};
use crate::victims::VictimLayout;

pub const VICTIM_PCID: Pcid = 1;
/// Victim page i lives at PRM frame `8 * i`, leaving the other frames that
/// share its DRAM banks free for co-resident enclaves.
pub const VICTIM_FRAME_STRIDE: u64 = 8;
/// First frame handed to non-enclave attackers (1MB).
const LOW_FRAME_START: PhysFrame = 0x100;
/// Attacker virtual pages start here (0x7000_0000), aligned for eviction sets.
const ATTACKER_VPN_BASE: VirtPage = 0x7_0000;

/// Where the victim's cycles went. `compute + latency + aex` equals the
/// victim's completion cycle.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Accounting {
    pub compute: u64,
    pub latency: u64,
    pub aex: u64,
}

impl Accounting {
    pub fn total(&self) -> u64 {
        self.compute + self.latency + self.aex
    }
}

#[derive(Clone, Debug)]
struct Frames {
    used: BTreeSet<PhysFrame>,
    prm_first: PhysFrame,
    prm_end: PhysFrame,
    phys_end: PhysFrame,
    low_next: PhysFrame,
}

impl Frames {
    fn claim(&mut self, f: PhysFrame) -> bool {
        self.used.insert(f)
    }

    fn claim_prm(&mut self, n: usize, pred: &dyn Fn(PhysFrame) -> bool) -> Result<Vec<PhysFrame>> {
        let found: Vec<_> =
            (self.prm_first..self.prm_end).filter(|f| !self.used.contains(f) && pred(*f)).take(n).collect();
        if found.len() < n {
            return Err(SimError::OutOfFrames(format!("wanted {n} PRM frames, found {}", found.len())));
        }
        self.used.extend(found.iter().copied());
        Ok(found)
    }

    fn claim_low(&mut self, n: usize, pred: &dyn Fn(PhysFrame) -> bool) -> Result<Vec<PhysFrame>> {
        let mut out = Vec::with_capacity(n);
        let mut f = self.low_next;
        while out.len() < n {
            if f >= self.phys_end {
                return Err(SimError::OutOfFrames(format!("wanted {n} frames outside PRM")));
            }
            if (f < self.prm_first || f >= self.prm_end) && !self.used.contains(&f) && pred(f) {
                out.push(f);
            }
            f += 1;
        }
        self.used.extend(out.iter().copied());
        Ok(out)
    }
}

/// One attacker's private machine state.
#[derive(Debug)]
pub(crate) struct AttackerSlot {
    pub(crate) id: ActorId,
    pub(crate) space: AddressSpace,
    pub(crate) tlb: usize,
    pub(crate) core: usize,
    pub(crate) rng: SimRng,
    pub(crate) clock: SmuggledClock,
    pub(crate) placement: Placement,
    next_vpn: VirtPage,
}

/// Shared hardware plus the victim's address space.
pub(crate) struct Machine {
    pub(crate) cfg: SimConfig,
    pub(crate) layout: VictimLayout,
    pub(crate) victim: AddressSpace,
    pub(crate) tlbs: Vec<TlbState>,
    pub(crate) caches: CacheState,
    pub(crate) dram: DramState,
    pub(crate) dram_rng: SimRng,
    pub(crate) aex: AexCounter,
    pub(crate) acct: Accounting,
    pub(crate) victim_next: Cycle,
    pub(crate) log: EventLog,
    frames: Frames,
    seed: u64,
}

/// Result of one memory access below translation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct MemOutcome {
    pub(crate) level: HitLevel,
    pub(crate) latency: u64,
    pub(crate) row: Option<RowOutcome>,
}

impl Machine {
    pub(crate) fn new(cfg: &SimConfig, layout: &VictimLayout, seed: u64) -> Result<Self> {
        let prm_first = cfg.prm.base >> PAGE_SHIFT;
        let prm_end = (cfg.prm.base + cfg.prm.size) >> PAGE_SHIFT;
        let mut frames = Frames {
            used: BTreeSet::new(),
            prm_first,
            prm_end,
            phys_end: cfg.phys_bytes() >> PAGE_SHIFT,
            low_next: LOW_FRAME_START,
        };
        let mut victim = AddressSpace::new(VICTIM_PCID, Some((layout.elrange_base, layout.elrange_pages)), cfg.prm);
        for (i, page) in layout.pages().enumerate() {
            let f = prm_first + VICTIM_FRAME_STRIDE * i as u64;
            if f >= prm_end {
                return Err(SimError::OutOfFrames(format!("victim needs {} pages", layout.elrange_pages)));
            }
            frames.claim(f);
            victim.map(page, f)?;
        }
        Ok(Machine {
            cfg: cfg.clone(),
            layout: layout.clone(),
            victim,
            tlbs: vec![TlbState::new(&cfg.tlb, stream_rng(seed, streams::REPLACEMENT))],
            caches: CacheState::new(&cfg.cache, cfg.cores, stream_rng(seed, streams::REPLACEMENT + 1)),
            dram: DramState::new(&cfg.dram),
            dram_rng: stream_rng(seed, streams::DRAM),
            aex: AexCounter::default(),
            acct: Accounting::default(),
            victim_next: 0,
            log: EventLog::default(),
            frames,
            seed,
        })
    }

    pub(crate) fn logs_full(&self) -> bool {
        self.cfg.log == LogLevel::Full
    }

    /// Creates the state for attacker `index` (actor id `index + 1`).
    pub(crate) fn add_attacker(&mut self, index: usize, placement: Placement) -> Result<AttackerSlot> {
        if placement.colocated && !self.cfg.hyperthreading {
            return Err(SimError::Precondition("colocated attacker needs hyperthreading".into()));
        }
        let id = index as ActorId + 1;
        let tlb = if placement.colocated && self.cfg.tlb.sharing == TlbSharing::Shared {
            0
        } else {
            let rng = stream_rng(self.seed, streams::REPLACEMENT + 2 + index as u64);
            self.tlbs.push(TlbState::new(&self.cfg.tlb, rng));
            self.tlbs.len() - 1
        };
        let core = if placement.colocated { 0 } else { 1 + index % (self.cfg.cores.max(2) as usize - 1) };
        let core = core.min(self.cfg.cores as usize - 1);
        let elrange = placement.enclave.then_some((ATTACKER_VPN_BASE, 1 << 20));
        let clock = if placement.enclave {
            SmuggledClock::new(self.cfg.noise.clock_sigma, self.cfg.noise.clock_stale_prob)
        } else {
            SmuggledClock::exact()
        };
        Ok(AttackerSlot {
            id,
            space: AddressSpace::new(VICTIM_PCID + 1 + index as Pcid, elrange, self.cfg.prm),
            tlb,
            core,
            rng: stream_rng(self.seed, streams::ATTACKER_BASE + index as u64),
            clock,
            placement,
            next_vpn: ATTACKER_VPN_BASE,
        })
    }

    /// Cache hierarchy then DRAM on a full miss.
    pub(crate) fn mem_access(&mut self, core: usize, pa: PhysAddr, kind: AccessKind) -> Result<MemOutcome> {
        let c = self.caches.access(core, pa, kind);
        let sigma = self.cfg.noise.dram_sigma;
        let mut latency = c.latency;
        let mut row = None;
        if c.level == HitLevel::Memory {
            let d = self.dram.access(pa, &mut self.dram_rng, sigma)?;
            latency += d.latency;
            row = Some(d.row);
        }
        if let Some(next) = c.prefetched {
            if next.0 < self.cfg.phys_bytes() {
                self.dram.access(next, &mut self.dram_rng, sigma)?;
            }
        }
        Ok(MemOutcome { level: c.level, latency, row })
    }

    /// AEX on the victim core at cycle `now`; delays the victim's next step.
    pub(crate) fn victim_aex(&mut self, now: Cycle, reason: AexReason) -> u64 {
        let cost = aex(&mut self.aex, &mut self.tlbs[0], VICTIM_PCID, reason, &self.cfg);
        self.acct.aex += cost;
        self.victim_next += cost;
        self.log.push(now, VICTIM_ID, EventKind::Aex { reason, cost });
        cost
    }
}

/// Access latency as an attacker sees it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Probe {
    pub latency: u64,
    /// The access missed the first-level TLB (performance-counter view).
    pub tlb_miss: bool,
}

/// The interface an attacker callback gets: its own memory, the OS's
/// control over the victim's page tables, and IPIs.
pub struct AttackCtx<'a> {
    pub(crate) m: &'a mut Machine,
    pub(crate) s: &'a mut AttackerSlot,
    now: Cycle,
    cursor: Cycle,
}

impl<'a> AttackCtx<'a> {
    pub(crate) fn new(m: &'a mut Machine, s: &'a mut AttackerSlot, now: Cycle) -> Self {
        AttackCtx { m, s, now, cursor: now }
    }

    /// Cycle at which this callback started.
    pub fn now(&self) -> Cycle {
        self.now
    }

    /// Cycle after this callback's own accesses so far.
    pub fn cursor(&self) -> Cycle {
        self.cursor
    }

    pub fn id(&self) -> ActorId {
        self.s.id
    }

    pub fn config(&self) -> &SimConfig {
        &self.m.cfg
    }

    pub fn victim_layout(&self) -> &VictimLayout {
        &self.m.layout
    }

    pub fn rng(&mut self) -> &mut SimRng {
        &mut self.s.rng
    }

    /// Reads the attacker's clock: exact outside an enclave, smuggled inside.
    pub fn read_clock(&mut self) -> Cycle {
        let t = self.cursor;
        self.s.clock.read(t, &mut self.s.rng)
    }

    pub fn wait(&mut self, cycles: u64) {
        self.cursor += cycles;
    }

    /// Maps `n` fresh virtual pages whose base is a multiple of `align`
    /// pages. Frames come from the PRM for enclave attackers.
    pub fn alloc_pages(&mut self, n: usize, align: u64) -> Result<VirtPage> {
        self.alloc_pages_where(n, align, &|_| true).map(|v| v[0])
    }

    /// Like `alloc_pages` but each backing frame must satisfy `pred`.
    /// Returns the mapped virtual pages in order.
    pub fn alloc_pages_where(
        &mut self,
        n: usize,
        align: u64,
        pred: &dyn Fn(PhysFrame) -> bool,
    ) -> Result<Vec<VirtPage>> {
        if n == 0 {
            return Err(SimError::BadParam("allocation of zero pages".into()));
        }
        let frames = if self.s.placement.enclave {
            self.m.frames.claim_prm(n, pred)?
        } else {
            self.m.frames.claim_low(n, pred)?
        };
        let align = align.max(1);
        let base = self.s.next_vpn.div_ceil(align) * align;
        for (i, f) in frames.iter().enumerate() {
            self.s.space.map(base + i as u64, *f)?;
        }
        self.s.next_vpn = base + n as u64;
        Ok((base..base + n as u64).collect())
    }

    /// Physical address of one of the attacker's own pages.
    pub fn own_phys(&self, va: VirtAddr) -> Result<PhysAddr> {
        self.s.space.phys_of(va)
    }

    /// Physical address behind a victim virtual address. The OS owns the
    /// victim's page tables, so this is part of its knowledge.
    pub fn victim_phys(&self, va: VirtAddr) -> Result<PhysAddr> {
        self.m.victim.phys_of(va)
    }

    fn raw_access(&mut self, va: VirtAddr, kind: AccessKind) -> Result<(Probe, MemOutcome, PhysAddr, TlbHit)> {
        let tr = translate(&mut self.s.space, va, kind, &mut self.m.tlbs[self.s.tlb], &self.m.cfg.tlb)?;
        let pa = match (tr.phys, tr.fault) {
            (Some(pa), None) => pa,
            _ => return Err(SimError::UnmappedPage(va.page())),
        };
        let mem = self.m.mem_access(self.s.core, pa, kind)?;
        let latency = tr.latency + mem.latency;
        self.cursor += latency;
        if self.m.logs_full() {
            self.m.log.push(
                self.cursor,
                self.s.id,
                EventKind::AttackerAccess { va, latency, tlb: tr.tlb, cache: mem.level },
            );
        }
        Ok((Probe { latency, tlb_miss: tr.tlb != TlbHit::L1 }, mem, pa, tr.tlb))
    }

    /// Touches one of the attacker's own addresses.
    pub fn access(&mut self, va: VirtAddr, kind: AccessKind) -> Result<Probe> {
        self.raw_access(va, kind).map(|r| r.0)
    }

    /// Times one read with the attacker's clock.
    pub fn timed_access(&mut self, va: VirtAddr) -> Result<u64> {
        let t0 = self.read_clock();
        self.raw_access(va, AccessKind::DataRead)?;
        let t1 = self.read_clock();
        Ok(t1.saturating_sub(t0))
    }

    /// Like `timed_access`, and when the read reaches DRAM the true row
    /// outcome is logged for scoring.
    pub fn measure_row(&mut self, va: VirtAddr) -> Result<u64> {
        let t0 = self.read_clock();
        let (_, mem, pa, _) = self.raw_access(va, AccessKind::DataRead)?;
        let t1 = self.read_clock();
        if let Some(row) = mem.row {
            self.m.log.push(self.cursor, self.s.id, EventKind::AttackerDram { pa, row });
        }
        Ok(t1.saturating_sub(t0))
    }

    /// `clflush` on one of the attacker's own addresses.
    pub fn flush(&mut self, va: VirtAddr) -> Result<()> {
        let pa = self.s.space.phys_of(va)?;
        self.m.caches.flush_line(pa);
        self.cursor += self.m.cfg.cache.l1d.latency;
        Ok(())
    }

    pub fn read_and_reset_flags(&mut self, pages: &[VirtPage], which: FlagSel) -> Result<Vec<FlagReading>> {
        let r = self.m.victim.read_and_reset_flags(pages, which)?;
        let set = r.iter().filter(|f| f.accessed_was_set || f.dirty_was_set).count() as u32;
        self.m.log.push(self.now, self.s.id, EventKind::FlagsRead { pages: pages.len() as u32, set });
        Ok(r)
    }

    /// Pages among `pages` whose accessed flag was set; resets those flags.
    pub fn accessed_pages(&mut self, pages: &[VirtPage]) -> Result<BTreeSet<VirtPage>> {
        Ok(self
            .read_and_reset_flags(pages, FlagSel::Accessed)?
            .into_iter()
            .filter(|f| f.accessed_was_set)
            .map(|f| f.page)
            .collect())
    }

    pub fn set_trap(&mut self, page: VirtPage, trap: Trap) -> Result<()> {
        self.m.victim.set_pte_trap(page, trap)?;
        self.m.log.push(self.now, self.s.id, EventKind::TrapSet { page });
        Ok(())
    }

    pub fn clear_trap(&mut self, page: VirtPage, trap: Trap) -> Result<()> {
        self.m.victim.clear_pte_trap(page, trap)?;
        self.m.log.push(self.now, self.s.id, EventKind::TrapCleared { page });
        Ok(())
    }

    /// Sends a TLB-shootdown IPI to the victim core. Returns the AEX cost.
    pub fn shootdown(&mut self) -> u64 {
        self.m.victim_aex(self.now, AexReason::IpiShootdown)
    }
}
