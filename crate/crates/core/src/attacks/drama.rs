// SPDX-License-Identifier: Apache-2.0

//! Cross-enclave DRAMA: open a different row in the target's bank with
//! `p_prime`, wait, then time `p`, which shares the target's row.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::addr::{PhysAddr, PhysFrame, VirtAddr, LINE_SHIFT, LINE_SIZE, PAGE_SIZE};
use crate::attacks::{params, Actors, AttackStrategy, Observation, Placement};
use crate::config::SimConfig;
use crate::dram::{dram_map, find_row_pair};
use crate::engine::{AttackCtx, Cycle};
use crate::error::Result;
use crate::victims::{gap, VictimLayout};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub target: String,
    pub period: Cycle,
    pub mode: Mode,
}

impl Default for Params {
    fn default() -> Self {
        Params { target: gap::SMALL_BRANCH.into(), period: 1000, mode: Mode::Monitor }
    }
}

/// `monitor` watches for the victim opening the target's row.
/// `histogram` opens `p`'s or `p_prime`'s row at random before each
/// timing, sampling both latency classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Monitor,
    Histogram,
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, _cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    Ok(vec![Box::new(Drama::new(layout.symbol(&p.target)?, p.period, p.mode))])
}

/// Latency band that counts as a row hit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitWindow {
    pub lo: u64,
    pub hi: u64,
}

impl HitWindow {
    pub fn contains(&self, lat: u64) -> bool {
        (self.lo..self.hi).contains(&lat)
    }
}

/// Claims one attacker page holding a line in the target's row and one
/// holding a line elsewhere in the same bank. Returns `(p, p_prime)`.
pub fn claim_row_pair(ctx: &mut AttackCtx<'_>, target: PhysAddr) -> Result<(VirtAddr, VirtAddr)> {
    let dram = ctx.config().dram.clone();
    let t = dram_map(target, &dram)?;
    let lines = move |f: PhysFrame| (0..PAGE_SIZE / LINE_SIZE).map(move |k| PhysAddr::from_frame(f, k << LINE_SHIFT));
    let d1 = dram.clone();
    let same_row = move |f| lines(f).any(|l| dram_map(l, &d1).is_ok_and(|c| c.same_bank(&t) && c.row == t.row));
    let d2 = dram.clone();
    let other_row = move |f| lines(f).any(|l| dram_map(l, &d2).is_ok_and(|c| c.same_bank(&t) && c.row != t.row));
    let vp = ctx.alloc_pages_where(1, 1, &same_row)?[0];
    let vpp = ctx.alloc_pages_where(1, 1, &other_row)?[0];
    let fp = ctx.own_phys(VirtAddr::from_page(vp, 0))?.frame();
    let fpp = ctx.own_phys(VirtAddr::from_page(vpp, 0))?.frame();
    let (p, pp) = find_row_pair(target, &[fp, fpp], &dram)?;
    let va = |pa: PhysAddr| VirtAddr::from_page(if pa.frame() == fp { vp } else { vpp }, pa.offset());
    Ok((va(p), va(pp)))
}

/// Opens `p_prime`'s row, then times `p`: a conflict. Opening `p`'s row
/// first gives a hit. Both lines are flushed so every read reaches DRAM.
pub fn calibrate(ctx: &mut AttackCtx<'_>, p: VirtAddr, pp: VirtAddr, rounds: usize) -> Result<HitWindow> {
    let (mut hit, mut conflict) = (0u64, 0u64);
    for _ in 0..rounds {
        ctx.flush(p)?;
        ctx.timed_access(p)?;
        ctx.flush(p)?;
        hit += ctx.timed_access(p)?;
        ctx.flush(p)?;
        ctx.timed_access(pp)?;
        ctx.flush(pp)?;
        conflict += ctx.timed_access(p)?;
    }
    ctx.flush(p)?;
    let (h, c) = (hit / rounds as u64, conflict / rounds as u64);
    let half = c.saturating_sub(h) / 2;
    Ok(HitWindow { lo: h.saturating_sub(half), hi: h + half })
}

pub struct Drama {
    target: VirtAddr,
    period: Cycle,
    mode: Mode,
    pair: Option<(VirtAddr, VirtAddr)>,
    latencies: Vec<(Cycle, u64)>,
}

impl Drama {
    pub fn new(target: VirtAddr, period: Cycle, mode: Mode) -> Self {
        Drama { target, period, mode, pair: None, latencies: Vec::new() }
    }
}

impl AttackStrategy for Drama {
    fn name(&self) -> &str {
        "drama"
    }

    fn placement(&self) -> Placement {
        Placement { colocated: false, enclave: true }
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let d = ctx.victim_phys(self.target)?;
        let (p, pp) = claim_row_pair(ctx, d)?;
        ctx.flush(p)?;
        ctx.timed_access(pp)?;
        ctx.flush(pp)?;
        self.pair = Some((p, pp));
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let (p, pp) = self.pair.expect("set up before ticking");
        if self.mode == Mode::Histogram {
            let opener = if ctx.rng().random_bool(0.5) { p } else { pp };
            ctx.timed_access(opener)?;
            ctx.flush(opener)?;
        }
        let lat = ctx.measure_row(p)?;
        ctx.flush(p)?;
        if self.mode == Mode::Monitor {
            ctx.timed_access(pp)?;
            ctx.flush(pp)?;
        }
        self.latencies.push((ctx.now(), lat));
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::Latencies(self.latencies.clone())
    }
}
