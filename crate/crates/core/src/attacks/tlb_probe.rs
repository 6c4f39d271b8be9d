// SPDX-License-Identifier: Apache-2.0

//! TLB Prime+Probe from the victim's sibling hyperthread. Each round
//! re-touches one full eviction set per monitored set and counts the
//! entries that no longer hit in the first-level TLB.

use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, VirtAddr, VirtPage};
use crate::attacks::{params, Actors, AttackStrategy, Observation, Placement};
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::{Result, SimError};
use crate::tlb::TlbLevel;
use crate::victims::VictimLayout;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub dtlb_sets: Vec<u32>,
    pub itlb_sets: Vec<u32>,
    pub period: Cycle,
}

impl Default for Params {
    fn default() -> Self {
        Params { dtlb_sets: (0..16).collect(), itlb_sets: Vec::new(), period: 100 }
    }
}

pub fn build(p: &serde_json::Value, _layout: &VictimLayout, cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    for (level, sets) in [(TlbLevel::Dtlb, &p.dtlb_sets), (TlbLevel::Itlb, &p.itlb_sets)] {
        let n = level.geometry(&cfg.tlb).sets;
        if let Some(s) = sets.iter().find(|&&s| s >= n) {
            return Err(SimError::BadParam(format!("{level:?} set {s} out of range (0..{n})")));
        }
    }
    if p.dtlb_sets.is_empty() && p.itlb_sets.is_empty() {
        return Err(SimError::BadParam("no TLB sets to monitor".into()));
    }
    Ok(vec![Box::new(TlbProbe { params: p, groups: Vec::new(), rounds: Vec::new() })])
}

struct Group {
    kind: AccessKind,
    pages: Vec<VirtPage>,
}

pub struct TlbProbe {
    params: Params,
    groups: Vec<Group>,
    rounds: Vec<(Cycle, Vec<u32>)>,
}

impl TlbProbe {
    fn touch(&self, ctx: &mut AttackCtx<'_>, g: &Group) -> Result<u32> {
        let mut misses = 0;
        for &p in &g.pages {
            misses += ctx.access(VirtAddr::from_page(p, 0), g.kind)?.tlb_miss as u32;
        }
        Ok(misses)
    }
}

impl AttackStrategy for TlbProbe {
    fn name(&self) -> &str {
        "tlb-probe"
    }

    fn placement(&self) -> Placement {
        Placement { colocated: true, enclave: false }
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.params.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let tlb = ctx.config().tlb.clone();
        let plan = [
            (TlbLevel::Dtlb, AccessKind::DataRead, self.params.dtlb_sets.clone()),
            (TlbLevel::Itlb, AccessKind::CodeFetch, self.params.itlb_sets.clone()),
        ];
        for (level, kind, sets) in plan {
            if sets.is_empty() {
                continue;
            }
            let g = level.geometry(&tlb);
            let n = g.sets as u64;
            let base = ctx.alloc_pages((n * g.ways as u64) as usize, n)?;
            for s in sets {
                let pages = (0..g.ways as u64).map(|k| base + s as u64 + k * n).collect();
                self.groups.push(Group { kind, pages });
            }
        }
        for g in &self.groups {
            self.touch(ctx, g)?;
        }
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let mut counts = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            counts.push(self.touch(ctx, g)?);
        }
        self.rounds.push((ctx.now(), counts));
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::ProbeMisses(self.rounds.clone())
    }
}

/// Monitored-set indices with at least one miss, per round; empty rounds
/// are dropped.
pub fn active_sets(obs: &Observation, sets: &[u32]) -> Vec<(Cycle, Vec<u32>)> {
    let Observation::ProbeMisses(rounds) = obs else { return Vec::new() };
    rounds
        .iter()
        .filter_map(|(t, c)| {
            let hit: Vec<u32> = c.iter().zip(sets).filter(|(m, _)| **m > 0).map(|(_, s)| *s).collect();
            (!hit.is_empty()).then_some((*t, hit))
        })
        .collect()
}
