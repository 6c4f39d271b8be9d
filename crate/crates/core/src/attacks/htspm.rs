// SPDX-License-Identifier: Apache-2.0

//! Interrupt-free page monitoring: a cleaner on the victim's sibling
//! hyperthread evicts the shared TLBs, and a collector polls the
//! accessed flags.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, VirtAddr, VirtPage};
use crate::attacks::{params, resolve_pages, Actors, AttackStrategy, Observation, Placement};
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::{Result, SimError};
use crate::translation::FlagSel;
use crate::victims::{hunspell, VictimLayout};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub pages: Vec<String>,
    pub clean_period: Cycle,
    pub collect_period: Cycle,
}

impl Default for Params {
    fn default() -> Self {
        Params { pages: vec![hunspell::DICT.into()], clean_period: 4978, collect_period: 128 }
    }
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    if !cfg.hyperthreading {
        return Err(SimError::Precondition("HT-SPM needs hyperthreading".into()));
    }
    let pages = resolve_pages(layout, &p.pages)?;
    Ok(vec![Box::new(Cleaner::new(p.clean_period)), Box::new(Collector::new(pages, p.collect_period))])
}

/// Walks an eviction set covering every L2 TLB set, which also sweeps
/// every dTLB set.
pub struct Cleaner {
    period: Cycle,
    pages: Vec<VirtPage>,
}

impl Cleaner {
    pub fn new(period: Cycle) -> Self {
        Cleaner { period, pages: Vec::new() }
    }
}

impl AttackStrategy for Cleaner {
    fn name(&self) -> &str {
        "ht-spm-cleaner"
    }

    fn placement(&self) -> Placement {
        Placement { colocated: true, enclave: false }
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let stlb = ctx.config().tlb.stlb;
        let n = stlb.entries() as usize;
        let base = ctx.alloc_pages(n, stlb.sets as u64)?;
        self.pages = (base..base + n as u64).collect();
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        for &p in &self.pages {
            ctx.access(VirtAddr::from_page(p, 0), AccessKind::DataRead)?;
        }
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::None
    }
}

/// Reads and clears the monitored pages' accessed flags.
pub struct Collector {
    pages: Vec<VirtPage>,
    period: Cycle,
    sets: Vec<(Cycle, BTreeSet<VirtPage>)>,
}

impl Collector {
    pub fn new(pages: Vec<VirtPage>, period: Cycle) -> Self {
        Collector { pages, period, sets: Vec::new() }
    }
}

impl AttackStrategy for Collector {
    fn name(&self) -> &str {
        "ht-spm"
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        ctx.read_and_reset_flags(&self.pages, FlagSel::Both)?;
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let s = ctx.accessed_pages(&self.pages)?;
        if !s.is_empty() {
            self.sets.push((ctx.now(), s));
        }
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::PageSets(self.sets.clone())
    }
}

/// A burst of observations: first and last cycle and the union of pages.
pub type Segment = (Cycle, Cycle, BTreeSet<VirtPage>);

/// Groups observations no more than `gap` cycles apart.
pub fn segments(obs: &Observation, gap: Cycle) -> Vec<Segment> {
    let Observation::PageSets(sets) = obs else { return Vec::new() };
    let mut out: Vec<Segment> = Vec::new();
    for (t, s) in sets {
        match out.last_mut() {
            Some(seg) if t - seg.1 <= gap => {
                seg.1 = *t;
                seg.2.extend(s.iter().copied());
            }
            _ => out.push((*t, *t, s.clone())),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_split_on_gap() {
        let s = |t, v: &[u64]| (t, v.iter().copied().collect::<BTreeSet<_>>());
        let o = Observation::PageSets(vec![s(100, &[1]), s(228, &[2]), s(5000, &[3]), s(5128, &[1])]);
        let seg = segments(&o, 1000);
        assert_eq!(seg.len(), 2);
        assert_eq!(seg[0].2, [1, 2].into_iter().collect());
        assert_eq!((seg[1].0, seg[1].1), (5000, 5128));
    }
}
