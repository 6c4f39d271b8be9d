// SPDX-License-Identifier: Apache-2.0

//! Page tables and address translation.
//!
//! A single-level table maps virtual pages to entries carrying the x86 PTE
//! flags that matter here. Accessed and dirty flags are only ever set by a
//! page walk, so a translation served from a TLB leaves them untouched.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, PhysAddr, PhysFrame, VirtAddr, VirtPage, PAGE_SHIFT};
use crate::config::{PrmConfig, SimConfig, TlbConfig};
use crate::error::{Result, SimError};
use crate::tlb::{FlushScope, Pcid, TlbEntry, TlbHit, TlbState};

pub const PTE_PRESENT: u64 = 1 << 0;
pub const PTE_ACCESSED: u64 = 1 << 5;
pub const PTE_DIRTY: u64 = 1 << 6;
/// One of the must-be-zero bits above the physical address field.
pub const PTE_RESERVED: u64 = 1 << 51;
pub const PTE_NX: u64 = 1 << 63;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageTableEntry {
    pub frame: PhysFrame,
    pub present: bool,
    pub accessed: bool,
    pub dirty: bool,
    pub nx: bool,
    pub reserved_fault: bool,
}

impl PageTableEntry {
    pub fn new(frame: PhysFrame) -> Self {
        PageTableEntry { frame, present: true, accessed: false, dirty: false, nx: false, reserved_fault: false }
    }

    /// Hardware bit layout of the entry.
    pub fn to_bits(&self) -> u64 {
        let mut v = self.frame << PAGE_SHIFT;
        for (on, bit) in [
            (self.present, PTE_PRESENT),
            (self.accessed, PTE_ACCESSED),
            (self.dirty, PTE_DIRTY),
            (self.reserved_fault, PTE_RESERVED),
            (self.nx, PTE_NX),
        ] {
            if on {
                v |= bit;
            }
        }
        v
    }

    pub fn from_bits(bits: u64) -> Self {
        PageTableEntry {
            frame: (bits & 0x000f_ffff_ffff_f000) >> PAGE_SHIFT,
            present: bits & PTE_PRESENT != 0,
            accessed: bits & PTE_ACCESSED != 0,
            dirty: bits & PTE_DIRTY != 0,
            nx: bits & PTE_NX != 0,
            reserved_fault: bits & PTE_RESERVED != 0,
        }
    }

    fn fault_for(&self, kind: AccessKind) -> Option<FaultKind> {
        if !self.present {
            Some(FaultKind::NotPresent)
        } else if self.reserved_fault {
            Some(FaultKind::Reserved)
        } else if self.nx && kind.is_code() {
            Some(FaultKind::NoExecute)
        } else {
            None
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultKind {
    NotPresent,
    Reserved,
    NoExecute,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trap {
    ClearPresent,
    SetReserved,
    SetNx,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlagSel {
    Accessed,
    Dirty,
    Both,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlagReading {
    pub page: VirtPage,
    pub accessed_was_set: bool,
    pub dirty_was_set: bool,
}

/// One process or enclave context.
#[derive(Clone, Debug)]
pub struct AddressSpace {
    pub pcid: Pcid,
    /// Enclave linear range as (first page, page count); `None` for a
    /// regular process.
    pub elrange: Option<(VirtPage, u64)>,
    pub prm: PrmConfig,
    mapping: BTreeMap<VirtPage, PageTableEntry>,
    frames: BTreeSet<PhysFrame>,
}

impl AddressSpace {
    pub fn new(pcid: Pcid, elrange: Option<(VirtPage, u64)>, prm: PrmConfig) -> Self {
        AddressSpace { pcid, elrange, prm, mapping: BTreeMap::new(), frames: BTreeSet::new() }
    }

    pub fn is_enclave(&self) -> bool {
        self.elrange.is_some()
    }

    pub fn in_elrange(&self, page: VirtPage) -> bool {
        self.elrange.is_some_and(|(base, len)| page >= base && page < base + len)
    }

    /// Installs a translation. Enclave pages must be backed by PRM frames
    /// and nothing else may be; frames are never shared within a space.
    pub fn map(&mut self, page: VirtPage, frame: PhysFrame) -> Result<()> {
        let in_prm = self.prm.contains(frame << PAGE_SHIFT);
        if self.in_elrange(page) != in_prm {
            return Err(SimError::InvalidConfig(format!(
                "page {page:#x} (enclave: {}) cannot map frame {frame:#x} (PRM: {in_prm})",
                self.in_elrange(page)
            )));
        }
        if self.mapping.contains_key(&page) {
            return Err(SimError::InvalidConfig(format!("page {page:#x} mapped twice")));
        }
        if !self.frames.insert(frame) {
            return Err(SimError::InvalidConfig(format!("frame {frame:#x} mapped twice")));
        }
        self.mapping.insert(page, PageTableEntry::new(frame));
        Ok(())
    }

    pub fn pte(&self, page: VirtPage) -> Result<&PageTableEntry> {
        self.mapping.get(&page).ok_or(SimError::UnmappedPage(page))
    }

    pub fn pte_mut(&mut self, page: VirtPage) -> Result<&mut PageTableEntry> {
        self.mapping.get_mut(&page).ok_or(SimError::UnmappedPage(page))
    }

    pub fn pages(&self) -> impl Iterator<Item = VirtPage> + '_ {
        self.mapping.keys().copied()
    }

    pub fn phys_of(&self, va: VirtAddr) -> Result<PhysAddr> {
        let pte = self.pte(va.page())?;
        Ok(PhysAddr::from_frame(pte.frame, va.offset()))
    }

    /// Reads the requested flags of each page and clears them. TLB contents
    /// are left alone.
    pub fn read_and_reset_flags(&mut self, pages: &[VirtPage], which: FlagSel) -> Result<Vec<FlagReading>> {
        for &p in pages {
            self.pte(p)?;
        }
        let mut out = Vec::with_capacity(pages.len());
        for &p in pages {
            let pte = self.mapping.get_mut(&p).expect("checked above");
            let reading = FlagReading {
                page: p,
                accessed_was_set: pte.accessed && which != FlagSel::Dirty,
                dirty_was_set: pte.dirty && which != FlagSel::Accessed,
            };
            if which != FlagSel::Dirty {
                pte.accessed = false;
            }
            if which != FlagSel::Accessed {
                pte.dirty = false;
            }
            out.push(reading);
        }
        Ok(out)
    }

    pub fn set_pte_trap(&mut self, page: VirtPage, trap: Trap) -> Result<()> {
        let pte = self.pte_mut(page)?;
        match trap {
            Trap::ClearPresent => pte.present = false,
            Trap::SetReserved => pte.reserved_fault = true,
            Trap::SetNx => pte.nx = true,
        }
        Ok(())
    }

    pub fn clear_pte_trap(&mut self, page: VirtPage, trap: Trap) -> Result<()> {
        let pte = self.pte_mut(page)?;
        match trap {
            Trap::ClearPresent => pte.present = true,
            Trap::SetReserved => pte.reserved_fault = false,
            Trap::SetNx => pte.nx = false,
        }
        Ok(())
    }

    /// Removes every trap from a page.
    pub fn restore(&mut self, page: VirtPage) -> Result<()> {
        let pte = self.pte_mut(page)?;
        pte.present = true;
        pte.reserved_fault = false;
        pte.nx = false;
        Ok(())
    }

    pub fn is_trapped(&self, page: VirtPage) -> bool {
        self.mapping.get(&page).is_some_and(|p| !p.present || p.reserved_fault || p.nx)
    }
}

/// Result of translating one virtual address.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Translation {
    pub phys: Option<PhysAddr>,
    pub tlb: TlbHit,
    pub walked: bool,
    pub accessed_set: bool,
    pub dirty_set: bool,
    pub latency: u64,
    pub fault: Option<FaultKind>,
}

/// TLB lookup, falling back to a page walk that updates the entry's
/// flags and fills the TLBs. Faults never fill the TLB.
pub fn translate(
    space: &mut AddressSpace,
    va: VirtAddr,
    kind: AccessKind,
    tlb: &mut TlbState,
    cfg: &TlbConfig,
) -> Result<Translation> {
    let page = va.page();
    let (hit, cached) = tlb.lookup(page, space.pcid, kind);
    if let Some(e) = cached {
        let latency = if hit == TlbHit::L2 { cfg.stlb_hit_latency } else { 0 };
        if e.nx && kind.is_code() {
            return Ok(Translation {
                phys: None,
                tlb: hit,
                walked: false,
                accessed_set: false,
                dirty_set: false,
                latency,
                fault: Some(FaultKind::NoExecute),
            });
        }
        return Ok(Translation {
            phys: Some(PhysAddr::from_frame(e.frame, va.offset())),
            tlb: hit,
            walked: false,
            accessed_set: false,
            dirty_set: false,
            latency,
            fault: None,
        });
    }
    let pcid = space.pcid;
    let pte = space.pte_mut(page)?;
    let latency = cfg.stlb_hit_latency + cfg.walk_latency;
    if let Some(fault) = pte.fault_for(kind) {
        return Ok(Translation {
            phys: None,
            tlb: TlbHit::Miss,
            walked: true,
            accessed_set: false,
            dirty_set: false,
            latency,
            fault: Some(fault),
        });
    }
    let accessed_set = !pte.accessed;
    pte.accessed = true;
    let dirty_set = kind.is_write() && !pte.dirty;
    if kind.is_write() {
        pte.dirty = true;
    }
    let entry = TlbEntry { vpn: page, pcid, frame: pte.frame, nx: pte.nx, global: false };
    tlb.insert(entry, kind);
    Ok(Translation {
        phys: Some(PhysAddr::from_frame(entry.frame, va.offset())),
        tlb: TlbHit::Miss,
        walked: true,
        accessed_set,
        dirty_set,
        latency,
        fault: None,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AexReason {
    PageFault,
    IpiShootdown,
    Other,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AexCounter {
    pub total: u64,
    pub page_fault: u64,
    pub ipi_shootdown: u64,
    pub other: u64,
}

impl AexCounter {
    pub fn record(&mut self, reason: AexReason) {
        self.total += 1;
        match reason {
            AexReason::PageFault => self.page_fault += 1,
            AexReason::IpiShootdown => self.ipi_shootdown += 1,
            AexReason::Other => self.other += 1,
        }
    }
}

/// Asynchronous enclave exit: counts it, flushes the enclave core's TLB
/// and returns the cycles the enclave loses.
pub fn aex(counter: &mut AexCounter, tlb: &mut TlbState, pcid: Pcid, reason: AexReason, cfg: &SimConfig) -> u64 {
    counter.record(reason);
    let scope = if cfg.pcid_selective_flush { FlushScope::Pcid(pcid) } else { FlushScope::All };
    tlb.flush(scope);
    match reason {
        AexReason::PageFault => cfg.costs.page_fault_aex,
        AexReason::IpiShootdown => cfg.costs.shootdown_aex,
        AexReason::Other => cfg.costs.other_aex,
    }
}
