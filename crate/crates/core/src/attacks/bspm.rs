// SPDX-License-Identifier: Apache-2.0

//! Basic sneaky page monitoring: poll the trigger page's accessed flag,
//! and on each hit read and clear the monitored pages' flags, then shoot
//! down the victim's TLB so later visits walk again.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::addr::VirtPage;
use crate::attacks::{params, resolve_pages, Actors, AttackStrategy, Observation};
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::Result;
use crate::translation::FlagSel;
use crate::victims::{eddsa, VictimLayout};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub trigger: String,
    pub pages: Vec<String>,
    /// Inspection period, cycles.
    pub period: Cycle,
}

impl Default for Params {
    fn default() -> Self {
        Params { trigger: eddsa::TRIGGER.into(), pages: vec![eddsa::MONITORED.into()], period: 200 }
    }
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, _cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    let trigger = resolve_pages(layout, std::slice::from_ref(&p.trigger))?;
    Ok(vec![Box::new(Bspm::new(trigger, resolve_pages(layout, &p.pages)?, p.period))])
}

pub struct Bspm {
    trigger: Vec<VirtPage>,
    pages: Vec<VirtPage>,
    period: Cycle,
    sets: Vec<(Cycle, BTreeSet<VirtPage>)>,
}

impl Bspm {
    pub fn new(trigger: Vec<VirtPage>, pages: Vec<VirtPage>, period: Cycle) -> Self {
        Bspm { trigger, pages, period, sets: Vec::new() }
    }
}

impl AttackStrategy for Bspm {
    fn name(&self) -> &str {
        "b-spm"
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        ctx.read_and_reset_flags(&self.trigger, FlagSel::Both)?;
        ctx.read_and_reset_flags(&self.pages, FlagSel::Both)?;
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        if ctx.accessed_pages(&self.trigger)?.is_empty() {
            return Ok(());
        }
        let set = ctx.accessed_pages(&self.pages)?;
        self.sets.push((ctx.now(), set));
        ctx.shootdown();
        Ok(())
    }

    fn on_victim_exit(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let set = ctx.accessed_pages(&self.pages)?;
        self.sets.push((ctx.now(), set));
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::PageSets(self.sets.clone())
    }
}

/// Number of inspections between consecutive sets containing `start`.
pub fn sets_per_segment(sets: &[(Cycle, BTreeSet<VirtPage>)], start: VirtPage) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (_, s) in sets {
        if s.contains(&start) {
            out.push(0);
        }
        if let Some(c) = out.last_mut() {
            *c += 1;
        }
    }
    out
}

/// Recovers EdDSA key bits from the number of trigger hits per bit.
pub fn decode_eddsa(obs: &Observation, layout: &VictimLayout) -> Result<Vec<bool>> {
    let Observation::PageSets(sets) = obs else { return Ok(Vec::new()) };
    // the exit read is not a trigger hit
    let hits = &sets[..sets.len().saturating_sub(1)];
    let mid = (eddsa::TRIGGERS_ZERO + eddsa::TRIGGERS_ONE) / 2;
    Ok(sets_per_segment(hits, layout.page(eddsa::MUL_POINT)?).into_iter().map(|c| c > mid).collect())
}
