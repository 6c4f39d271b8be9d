// SPDX-License-Identifier: Apache-2.0

//! Timing-enhanced page monitoring between alpha and beta pages.
//!
//! `both` mode waits until alpha and beta have both been seen, starts a
//! timer, lets the victim settle, then shoots down the TLB and clears the
//! flags; the next sighting of both stops the timer. `interval` mode times
//! each alpha-to-beta pair and shoots down after every beta.

use serde::{Deserialize, Serialize};

use crate::addr::VirtPage;
use crate::attacks::{params, resolve_pages, Actors, AttackStrategy, Observation};
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::{Result, SimError};
use crate::translation::FlagSel;
use crate::victims::{eddsa, VictimLayout};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Both,
    Interval,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub alpha: Vec<String>,
    pub beta: Vec<String>,
    pub mode: Mode,
    pub period: Cycle,
    pub settle_ns: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            alpha: vec![eddsa::MUL_POINT.into()],
            beta: vec![eddsa::DUP_POINT.into()],
            mode: Mode::Both,
            period: 500,
            settle_ns: 2000.0,
        }
    }
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    let a = resolve_pages(layout, &p.alpha)?;
    let b = resolve_pages(layout, &p.beta)?;
    if a.len() != b.len() || a.is_empty() {
        return Err(SimError::BadParam("alpha and beta must pair up".into()));
    }
    let settle = cfg.costs.ns_to_cycles(p.settle_ns);
    Ok(vec![Box::new(Tspm::new(a.into_iter().zip(b).collect(), p.mode, p.period, settle))])
}

pub struct Tspm {
    pairs: Vec<(VirtPage, VirtPage)>,
    pages: Vec<VirtPage>,
    mode: Mode,
    period: Cycle,
    settle: Cycle,
    seen: (bool, bool),
    starts: Vec<Option<Cycle>>,
    shoot_at: Option<Cycle>,
    timings: Vec<(Cycle, u32, u64)>,
}

impl Tspm {
    pub fn new(pairs: Vec<(VirtPage, VirtPage)>, mode: Mode, period: Cycle, settle: Cycle) -> Self {
        let mut pages: Vec<_> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
        pages.sort_unstable();
        pages.dedup();
        let n = pairs.len();
        Tspm {
            pairs,
            pages,
            mode,
            period,
            settle,
            seen: (false, false),
            starts: vec![None; n],
            shoot_at: None,
            timings: Vec::new(),
        }
    }

    fn tick_both(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        if let Some(at) = self.shoot_at {
            if ctx.now() >= at {
                ctx.shootdown();
                ctx.read_and_reset_flags(&self.pages, FlagSel::Accessed)?;
                self.seen = (false, false);
                self.shoot_at = None;
            }
            return Ok(());
        }
        let (a, b) = self.pairs[0];
        let set = ctx.accessed_pages(&self.pages)?;
        self.seen.0 |= set.contains(&a);
        self.seen.1 |= set.contains(&b);
        if self.seen == (true, true) {
            let t = ctx.read_clock();
            if let Some(s) = self.starts[0] {
                self.timings.push((ctx.now(), 0, t.saturating_sub(s)));
            }
            self.starts[0] = Some(t);
            self.shoot_at = Some(ctx.now() + self.settle);
        }
        Ok(())
    }

    fn tick_interval(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let set = ctx.accessed_pages(&self.pages)?;
        if set.is_empty() {
            return Ok(());
        }
        let t = ctx.read_clock();
        let mut flush = false;
        for (j, &(a, b)) in self.pairs.iter().enumerate() {
            if set.contains(&a) && self.starts[j].is_none() {
                self.starts[j] = Some(t);
            }
            if set.contains(&b) {
                if let Some(s) = self.starts[j].take() {
                    self.timings.push((ctx.now(), j as u32, t.saturating_sub(s)));
                    flush = true;
                }
            }
        }
        if flush {
            ctx.shootdown();
            ctx.read_and_reset_flags(&self.pages, FlagSel::Accessed)?;
        }
        Ok(())
    }
}

impl AttackStrategy for Tspm {
    fn name(&self) -> &str {
        "t-spm"
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        ctx.read_and_reset_flags(&self.pages, FlagSel::Both)?;
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        match self.mode {
            Mode::Both => self.tick_both(ctx),
            Mode::Interval => self.tick_interval(ctx),
        }
    }

    fn on_victim_exit(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        if self.mode == Mode::Both {
            if let Some(s) = self.starts[0] {
                let t = ctx.read_clock();
                self.timings.push((ctx.now(), 0, t.saturating_sub(s)));
            }
        }
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::Timings(self.timings.clone())
    }
}

/// Durations recorded for pair `pair`.
pub fn durations(obs: &Observation, pair: u32) -> Vec<u64> {
    match obs {
        Observation::Timings(t) => t.iter().filter(|x| x.1 == pair).map(|x| x.2).collect(),
        _ => Vec::new(),
    }
}
