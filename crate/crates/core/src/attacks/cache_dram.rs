// SPDX-License-Identifier: Apache-2.0

//! Cache-DRAM attack: one enclave thread keeps the target line out of the
//! LLC with Prime+Probe so the victim's reads reach DRAM, another runs
//! DRAMA on the target's row.

use serde::{Deserialize, Serialize};

use crate::addr::VirtAddr;
use crate::attacks::drama::{calibrate, claim_row_pair, HitWindow};
use crate::attacks::prime_probe::build_llc_eviction_set;
use crate::attacks::{params, Actors, AttackStrategy, Observation, Placement};
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::Result;
use crate::victims::{gap, VictimLayout};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub target: String,
    pub llc_period: Cycle,
    pub dram_period: Cycle,
    pub calibration_rounds: usize,
}

impl Default for Params {
    fn default() -> Self {
        Params { target: gap::SMALL_BRANCH.into(), llc_period: 2000, dram_period: 1000, calibration_rounds: 64 }
    }
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, _cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    let d = layout.symbol(&p.target)?;
    Ok(vec![
        Box::new(LlcEvictor { target: d, period: p.llc_period, lines: Vec::new() }),
        Box::new(RowWatcher {
            target: d,
            period: p.dram_period,
            rounds: p.calibration_rounds.max(1),
            pair: None,
            window: None,
            detections: Vec::new(),
        }),
    ])
}

pub struct LlcEvictor {
    target: VirtAddr,
    period: Cycle,
    lines: Vec<VirtAddr>,
}

impl AttackStrategy for LlcEvictor {
    fn name(&self) -> &str {
        "cache-dram-llc"
    }

    fn placement(&self) -> Placement {
        Placement { colocated: false, enclave: true }
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let d = ctx.victim_phys(self.target)?;
        self.lines = build_llc_eviction_set(ctx, d)?;
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        for &l in &self.lines {
            ctx.timed_access(l)?;
        }
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::None
    }
}

pub struct RowWatcher {
    target: VirtAddr,
    period: Cycle,
    rounds: usize,
    pair: Option<(VirtAddr, VirtAddr)>,
    window: Option<HitWindow>,
    detections: Vec<Cycle>,
}

impl RowWatcher {
    pub fn window(&self) -> Option<HitWindow> {
        self.window
    }
}

impl AttackStrategy for RowWatcher {
    fn name(&self) -> &str {
        "cache-dram"
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
        self.window = Some(calibrate(ctx, p, pp, self.rounds)?);
        ctx.timed_access(pp)?;
        ctx.flush(pp)?;
        self.pair = Some((p, pp));
        Ok(())
    }

    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let (p, pp) = self.pair.expect("set up before ticking");
        let lat = ctx.timed_access(p)?;
        ctx.flush(p)?;
        ctx.timed_access(pp)?;
        ctx.flush(pp)?;
        if self.window.is_some_and(|w| w.contains(lat)) {
            self.detections.push(ctx.now());
        }
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::Detections(self.detections.clone())
    }
}
