// SPDX-License-Identifier: Apache-2.0

//! Victim programs as access traces with nominal compute costs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, VirtAddr, VirtPage};
use crate::error::{Result, SimError};

pub mod binsearch;
pub mod bloom;
pub mod eddsa;
pub mod freetype;
pub mod gap;
pub mod hunspell;
pub mod modexp;
mod secret;

pub(crate) use secret::AttackerScope;
pub use secret::{in_attacker_code, Secret};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum Op {
    Compute,
    Access { va: VirtAddr, kind: AccessKind },
    Flush { va: VirtAddr },
}

/// Ground-truth boundary of the i-th secret-bearing unit (key bit, word,
/// query, invocation). Only the harness sees these.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mark {
    Begin(u32),
    End(u32),
}

/// `compute` cycles of work, then `op`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub compute: u64,
    pub op: Op,
    pub mark: Option<Mark>,
}

impl Step {
    pub fn fetch(compute: u64, va: VirtAddr) -> Self {
        Step { compute, op: Op::Access { va, kind: AccessKind::CodeFetch }, mark: None }
    }

    pub fn read(compute: u64, va: VirtAddr) -> Self {
        Step { compute, op: Op::Access { va, kind: AccessKind::DataRead }, mark: None }
    }

    pub fn write(compute: u64, va: VirtAddr) -> Self {
        Step { compute, op: Op::Access { va, kind: AccessKind::DataWrite }, mark: None }
    }

    pub fn flush(va: VirtAddr) -> Self {
        Step { compute: 0, op: Op::Flush { va }, mark: None }
    }

    pub fn compute(compute: u64) -> Self {
        Step { compute, op: Op::Compute, mark: None }
    }

    pub fn marked(mut self, mark: Mark) -> Self {
        self.mark = Some(mark);
        self
    }
}

/// Public knowledge of the victim binary: its enclave range, named
/// addresses and named page groups.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VictimLayout {
    pub elrange_base: VirtPage,
    pub elrange_pages: u64,
    #[serde(default)]
    pub symbols: BTreeMap<String, VirtAddr>,
    #[serde(default)]
    pub groups: BTreeMap<String, Vec<VirtPage>>,
}

impl VictimLayout {
    pub fn new(elrange_base: VirtPage, elrange_pages: u64) -> Self {
        VictimLayout { elrange_base, elrange_pages, ..Default::default() }
    }

    /// Parses the TOML layout schema:
    ///
    /// ```toml
    /// elrange_base = 0x400
    /// elrange_pages = 16
    /// [symbols]
    /// mul = 0x400040
    /// [groups]
    /// monitored = [0x400, 0x401]
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let l: VictimLayout = toml::from_str(s).map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        l.validate()?;
        Ok(l)
    }

    pub fn validate(&self) -> Result<()> {
        if self.elrange_pages == 0 {
            return Err(SimError::InvalidConfig("elrange_pages must be positive".into()));
        }
        let inside = |p: VirtPage| p >= self.elrange_base && p < self.elrange_base + self.elrange_pages;
        for (name, va) in &self.symbols {
            if !inside(va.page()) {
                return Err(SimError::InvalidConfig(format!("symbol `{name}` at {va} is outside the enclave range")));
            }
        }
        for (name, pages) in &self.groups {
            if let Some(p) = pages.iter().find(|&&p| !inside(p)) {
                return Err(SimError::InvalidConfig(format!(
                    "group `{name}` page {p:#x} is outside the enclave range"
                )));
            }
        }
        Ok(())
    }

    pub fn symbol(&self, name: &str) -> Result<VirtAddr> {
        self.symbols.get(name).copied().ok_or_else(|| SimError::Unknown { kind: "symbol", name: name.into() })
    }

    pub fn page(&self, name: &str) -> Result<VirtPage> {
        self.symbol(name).map(VirtAddr::page)
    }

    pub fn group(&self, name: &str) -> Result<&[VirtPage]> {
        self.groups
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| SimError::Unknown { kind: "page group", name: name.into() })
    }

    pub fn pages(&self) -> impl Iterator<Item = VirtPage> {
        self.elrange_base..self.elrange_base + self.elrange_pages
    }
}

/// What a victim run hides and the harness scores against.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Truth {
    Bits(Vec<bool>),
    Words { words: Vec<usize>, page_sets: Vec<BTreeSet<VirtPage>> },
    Members(Vec<bool>),
    Keys(Vec<u32>),
    Branches(Vec<bool>),
    Classes(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct VictimProgram {
    pub name: String,
    pub layout: VictimLayout,
    pub steps: Vec<Step>,
    pub secret: Secret<Truth>,
}

impl VictimProgram {
    pub fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(SimError::EmptyVictim);
        }
        self.layout.validate()?;
        for s in &self.steps {
            if let Op::Access { va, .. } | Op::Flush { va } = s.op {
                let p = va.page();
                if p < self.layout.elrange_base || p >= self.layout.elrange_base + self.layout.elrange_pages {
                    return Err(SimError::UnmappedPage(p));
                }
            }
        }
        Ok(())
    }

    /// Ordered pages touched by the trace.
    pub fn page_trace(&self) -> Vec<VirtPage> {
        self.steps
            .iter()
            .filter_map(|s| match s.op {
                Op::Access { va, .. } => Some(va.page()),
                _ => None,
            })
            .collect()
    }

    /// Sum of nominal compute cycles.
    pub fn nominal_compute(&self) -> u64 {
        self.steps.iter().map(|s| s.compute).sum()
    }
}

/// A plain trace victim with no secret, for harness tests.
pub fn trace_victim(name: &str, layout: VictimLayout, steps: Vec<Step>) -> VictimProgram {
    VictimProgram { name: name.into(), layout, steps, secret: Secret::new(Truth::Bits(Vec::new())) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_toml_roundtrip() {
        let l = VictimLayout::from_toml_str(
            "elrange_base = 0x400\nelrange_pages = 4\n[symbols]\nf = 0x401040\n[groups]\nm = [0x400, 0x403]\n",
        )
        .unwrap();
        assert_eq!(l.page("f").unwrap(), 0x401);
        assert_eq!(l.group("m").unwrap(), &[0x400, 0x403]);
    }

    #[test]
    fn layout_rejects_outside_symbol() {
        let e = VictimLayout::from_toml_str("elrange_base = 0x400\nelrange_pages = 1\n[symbols]\nf = 0x401000\n");
        assert!(e.is_err());
    }

    #[test]
    fn empty_victim_rejected() {
        let v = trace_victim("t", VictimLayout::new(1, 1), vec![]);
        assert_eq!(v.validate(), Err(SimError::EmptyVictim));
    }
}
