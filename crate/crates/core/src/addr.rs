// SPDX-License-Identifier: Apache-2.0

//! Address newtypes shared by every layer of the machine model.

use std::fmt;

use serde::{Deserialize, Serialize};

pub const PAGE_SHIFT: u32 = 12;
pub const PAGE_SIZE: u64 = 1 << PAGE_SHIFT;
pub const LINE_SHIFT: u32 = 6;
pub const LINE_SIZE: u64 = 1 << LINE_SHIFT;

/// Virtual page number (`va >> 12`).
pub type VirtPage = u64;
/// Physical frame number (`pa >> 12`).
pub type PhysFrame = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VirtAddr(pub u64);

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhysAddr(pub u64);

impl VirtAddr {
    pub fn from_page(page: VirtPage, offset: u64) -> Self {
        debug_assert!(offset < PAGE_SIZE);
        VirtAddr((page << PAGE_SHIFT) | offset)
    }

    pub fn page(self) -> VirtPage {
        self.0 >> PAGE_SHIFT
    }

    pub fn offset(self) -> u64 {
        self.0 & (PAGE_SIZE - 1)
    }
}

impl PhysAddr {
    pub fn from_frame(frame: PhysFrame, offset: u64) -> Self {
        debug_assert!(offset < PAGE_SIZE);
        PhysAddr((frame << PAGE_SHIFT) | offset)
    }

    pub fn frame(self) -> PhysFrame {
        self.0 >> PAGE_SHIFT
    }

    pub fn offset(self) -> u64 {
        self.0 & (PAGE_SIZE - 1)
    }

    /// Address of the enclosing 64-byte line.
    pub fn line(self) -> PhysAddr {
        PhysAddr(self.0 & !(LINE_SIZE - 1))
    }
}

impl fmt::Display for VirtAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

impl fmt::Display for PhysAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

/// What kind of memory reference an access is. Code fetches go through the
/// iTLB and L1i, data accesses through the dTLB and L1d.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AccessKind {
    CodeFetch,
    DataRead,
    DataWrite,
}

impl AccessKind {
    pub fn is_code(self) -> bool {
        matches!(self, AccessKind::CodeFetch)
    }

    pub fn is_write(self) -> bool {
        matches!(self, AccessKind::DataWrite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn page_and_offset_split() {
        let va = VirtAddr(0x401abc);
        assert_eq!(va.page(), 0x401);
        assert_eq!(va.offset(), 0xabc);
        assert_eq!(VirtAddr::from_page(0x401, 0xabc), va);
        assert_eq!(PhysAddr(0x1fc7).line(), PhysAddr(0x1fc0));
    }
}
