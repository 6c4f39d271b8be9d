// SPDX-License-Identifier: Apache-2.0

//! Controlled-channel attack: trap every monitored page, record each
//! fault, and re-arm the page the victim just left.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::addr::VirtPage;
use crate::attacks::{params, resolve_pages, Actors, AttackStrategy, Observation};
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::Result;
use crate::translation::Trap;
use crate::victims::{eddsa, VictimLayout};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Symbols or page-group names.
    pub pages: Vec<String>,
    pub trap: Trap,
}

impl Default for Params {
    fn default() -> Self {
        Params { pages: vec![eddsa::MONITORED.into()], trap: Trap::ClearPresent }
    }
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, _cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    Ok(vec![Box::new(PageFaultAttack::new(resolve_pages(layout, &p.pages)?, p.trap))])
}

pub struct PageFaultAttack {
    pages: BTreeSet<VirtPage>,
    trap: Trap,
    armed_off: Option<VirtPage>,
    faults: Vec<(Cycle, VirtPage)>,
}

impl PageFaultAttack {
    pub fn new(pages: impl IntoIterator<Item = VirtPage>, trap: Trap) -> Self {
        PageFaultAttack { pages: pages.into_iter().collect(), trap, armed_off: None, faults: Vec::new() }
    }
}

impl AttackStrategy for PageFaultAttack {
    fn name(&self) -> &str {
        "page-fault"
    }

    fn period(&self) -> Option<Cycle> {
        None
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        for &p in &self.pages {
            ctx.set_trap(p, self.trap)?;
        }
        Ok(())
    }

    fn on_page_fault(&mut self, ctx: &mut AttackCtx<'_>, page: VirtPage) -> Result<()> {
        if !self.pages.contains(&page) {
            return Ok(());
        }
        self.faults.push((ctx.now(), page));
        ctx.clear_trap(page, self.trap)?;
        if let Some(prev) = self.armed_off.replace(page) {
            ctx.set_trap(prev, self.trap)?;
        }
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::Faults(self.faults.clone())
    }
}

/// Splits the fault trace at each fault on `start` and counts faults per
/// segment.
pub fn segment_counts(faults: &[(Cycle, VirtPage)], start: VirtPage) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &(_, p) in faults {
        if p == start {
            out.push(0);
        }
        if let Some(c) = out.last_mut() {
            *c += 1;
        }
    }
    out
}

/// Recovers EdDSA key bits: a bit's segment holds 48 faults for 0 and 89
/// for 1.
pub fn decode_eddsa(obs: &Observation, layout: &VictimLayout) -> Result<Vec<bool>> {
    let Observation::Faults(f) = obs else { return Ok(Vec::new()) };
    let mid = (eddsa::VISITS_ZERO + eddsa::VISITS_ONE) / 2;
    Ok(segment_counts(f, layout.page(eddsa::MUL_POINT)?).into_iter().map(|c| c > mid).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments() {
        let f: Vec<_> = [1, 2, 3, 1, 2, 1].iter().map(|&p| (0, p)).collect();
        assert_eq!(segment_counts(&f, 1), [3, 2, 1]);
    }

    #[test]
    fn empty_trace_empty_key() {
        let l = eddsa::default_layout();
        assert!(decode_eddsa(&Observation::Faults(vec![]), &l).unwrap().is_empty());
    }
}
