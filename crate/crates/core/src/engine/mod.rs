// SPDX-License-Identifier: Apache-2.0

//! Single-timeline interleaving of one victim and its attackers.

use rand::Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::addr::{AccessKind, PhysAddr, LINE_SHIFT, PAGE_SHIFT};
use crate::attacks::{AttackStrategy, Observation};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::rng::{jittered, stream_rng, streams, SimRng};
use crate::translation::{translate, AexCounter, AexReason};
use crate::victims::{AttackerScope, Mark, Op, VictimProgram};

pub mod log;
mod machine;

pub use log::{Event, EventKind, EventLog};
pub use machine::{Accounting, AttackCtx, Probe, VICTIM_FRAME_STRIDE, VICTIM_PCID};

use machine::{AttackerSlot, Machine};

pub type Cycle = u64;
pub type ActorId = u32;

pub const VICTIM_ID: ActorId = 0;

/// Background traffic is injected in batches at this interval.
const BACKGROUND_PERIOD: Cycle = 1000;

/// The globally next actor among `(id, next cycle)` pairs: earliest cycle,
/// ties to the lower id. Actors with no pending event are skipped.
pub fn step_interleave(next: &[(ActorId, Option<Cycle>)]) -> Option<(ActorId, Cycle)> {
    next.iter().filter_map(|&(id, c)| c.map(|c| (c, id))).min().map(|(c, id)| (id, c))
}

/// Outcome of one simulated execution.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RunOutput {
    pub cycles: Cycle,
    pub aex: AexCounter,
    pub accounting: Accounting,
    pub log: EventLog,
    pub observations: Vec<(String, Observation)>,
    pub marks: Vec<(Cycle, Mark)>,
}

/// An attacked run paired with its attacker-free baseline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SimResult {
    pub baseline_cycles: Cycle,
    pub attacked_cycles: Cycle,
    /// All AEXs of the attacked run.
    pub aex_count: u64,
    /// AEXs the attack caused: page faults plus shootdowns.
    pub attack_aex: u64,
    pub aex: AexCounter,
    pub baseline_aex: AexCounter,
    pub accounting: Accounting,
    pub baseline_accounting: Accounting,
    pub event_log: EventLog,
    pub observations: Vec<(String, Observation)>,
    pub marks: Vec<(Cycle, Mark)>,
}

impl SimResult {
    pub fn slowdown(&self) -> f64 {
        self.attacked_cycles as f64 / self.baseline_cycles.max(1) as f64
    }

    /// First observation recorded by a strategy with this name.
    pub fn observation(&self, name: &str) -> Option<&Observation> {
        self.observations.iter().find(|(n, _)| n == name).map(|(_, o)| o)
    }
}

/// Runs the victim with and without the attackers under the same seed.
pub fn run_scenario(
    config: &SimConfig,
    victim: &VictimProgram,
    attackers: Vec<Box<dyn AttackStrategy>>,
    seed: u64,
) -> Result<SimResult> {
    let base = run_once(config, victim, Vec::new(), seed)?;
    let att = run_once(config, victim, attackers, seed)?;
    Ok(SimResult {
        baseline_cycles: base.cycles,
        attacked_cycles: att.cycles,
        aex_count: att.aex.total,
        attack_aex: att.aex.page_fault + att.aex.ipi_shootdown,
        aex: att.aex,
        baseline_aex: base.aex,
        accounting: att.accounting,
        baseline_accounting: base.accounting,
        event_log: att.log,
        observations: att.observations,
        marks: att.marks,
    })
}

struct Timeline<'v> {
    m: Machine,
    victim: &'v VictimProgram,
    attackers: Vec<Box<dyn AttackStrategy>>,
    slots: Vec<AttackerSlot>,
    fire: Vec<Option<Cycle>>,
    jitter: SimRng,
    jitter_sigma: f64,
    marks: Vec<(Cycle, Mark)>,
}

/// Executes one run without a baseline companion.
pub fn run_once(
    config: &SimConfig,
    victim: &VictimProgram,
    attackers: Vec<Box<dyn AttackStrategy>>,
    seed: u64,
) -> Result<RunOutput> {
    config.validate()?;
    victim.validate()?;
    let mut m = Machine::new(config, &victim.layout, seed)?;
    let mut slots = Vec::with_capacity(attackers.len());
    let mut fire = Vec::with_capacity(attackers.len());
    for (i, a) in attackers.iter().enumerate() {
        slots.push(m.add_attacker(i, a.placement())?);
        fire.push(match a.period() {
            Some(0) => return Err(SimError::BadParam(format!("{}: period must be positive", a.name()))),
            Some(p) => Some(a.phase() + p),
            None => None,
        });
    }
    let mut tl = Timeline {
        m,
        victim,
        attackers,
        slots,
        fire,
        jitter: stream_rng(seed, streams::COMPUTE_JITTER),
        jitter_sigma: config.noise.compute_jitter,
        marks: Vec::new(),
    };
    for i in 0..tl.attackers.len() {
        tl.call(i, 0, |a, ctx| a.setup(ctx))?;
    }
    tl.run(seed)?;
    let Timeline { mut m, attackers, marks, .. } = tl;
    m.log.finalize();
    Ok(RunOutput {
        cycles: m.victim_next,
        aex: m.aex,
        accounting: m.acct,
        log: m.log,
        observations: attackers.iter().map(|a| (a.name().to_string(), a.observation())).collect(),
        marks,
    })
}

impl Timeline<'_> {
    fn call<F>(&mut self, i: usize, now: Cycle, f: F) -> Result<()>
    where
        F: FnOnce(&mut dyn AttackStrategy, &mut AttackCtx<'_>) -> Result<()>,
    {
        let _scope = AttackerScope::enter();
        let mut ctx = AttackCtx::new(&mut self.m, &mut self.slots[i], now);
        f(self.attackers[i].as_mut(), &mut ctx)
    }

    fn compute_cost(&mut self, base: u64) -> u64 {
        if base == 0 || self.jitter_sigma <= 0.0 {
            return base;
        }
        jittered(&mut self.jitter, base, base as f64 * self.jitter_sigma)
    }

    fn run(&mut self, seed: u64) -> Result<()> {
        let cfg = self.m.cfg.clone();
        let n = self.attackers.len();
        let bg_id = n as ActorId + 1;
        let irq_id = n as ActorId + 2;
        let mut bg_rng = stream_rng(seed, streams::BACKGROUND);
        let mut irq_rng = stream_rng(seed, streams::INTERRUPTS);
        let bg = (cfg.noise.background_rate > 0.0)
            .then(|| Poisson::new(cfg.noise.background_rate * BACKGROUND_PERIOD as f64 / 1000.0))
            .transpose()
            .map_err(|e| SimError::InvalidConfig(format!("background rate: {e}")))?;
        let irq = (cfg.noise.interrupt_rate > 0.0)
            .then(|| Exp::new(cfg.noise.interrupt_rate / 1e6))
            .transpose()
            .map_err(|e| SimError::InvalidConfig(format!("interrupt rate: {e}")))?;
        let mut bg_next = bg.map(|_| BACKGROUND_PERIOD);
        let mut irq_next = irq.map(|d| 1 + d.sample(&mut irq_rng) as Cycle);

        let steps = &self.victim.steps;
        let mut idx = 0;
        let c0 = self.compute_cost(steps[0].compute);
        self.m.acct.compute += c0;
        self.m.victim_next = c0;
        let mut step_start: Cycle = 0;
        let mut exiting = false;
        let mut cands = Vec::with_capacity(n + 3);
        loop {
            cands.clear();
            cands.push((VICTIM_ID, Some(self.m.victim_next)));
            cands.extend(self.fire.iter().enumerate().map(|(i, f)| (i as ActorId + 1, *f)));
            cands.push((bg_id, bg_next));
            cands.push((irq_id, irq_next));
            let (id, t) = step_interleave(&cands).expect("victim always pending");
            if id == VICTIM_ID {
                if exiting {
                    self.m.log.push(t, VICTIM_ID, EventKind::VictimExit);
                    for i in 0..n {
                        self.call(i, t, |a, ctx| a.on_victim_exit(ctx))?;
                    }
                    return Ok(());
                }
                let step = steps[idx];
                let Some(lat) = self.victim_op(step.op, t)? else { continue };
                self.m.acct.latency += lat;
                match step.mark {
                    Some(mk @ Mark::Begin(_)) => self.marks.push((step_start, mk)),
                    Some(mk @ Mark::End(_)) => self.marks.push((t + lat, mk)),
                    None => {}
                }
                idx += 1;
                step_start = t + lat;
                if idx == steps.len() {
                    self.m.victim_next = t + lat;
                    exiting = true;
                } else {
                    let c = self.compute_cost(steps[idx].compute);
                    self.m.acct.compute += c;
                    self.m.victim_next = t + lat + c;
                }
            } else if id == bg_id {
                let d = bg.as_ref().expect("scheduled only when enabled");
                let count = d.sample(&mut bg_rng) as u64;
                for _ in 0..count {
                    let pa = random_non_prm_line(&cfg, &mut bg_rng);
                    if !self.m.caches.llc_access(pa) {
                        self.m.dram.access(pa, &mut bg_rng, 0.0)?;
                    }
                }
                bg_next = Some(t + BACKGROUND_PERIOD);
            } else if id == irq_id {
                self.m.victim_aex(t, AexReason::Other);
                let d = irq.as_ref().expect("scheduled only when enabled");
                irq_next = Some(t + 1 + d.sample(&mut irq_rng) as Cycle);
            } else {
                let i = (id - 1) as usize;
                self.call(i, t, |a, ctx| a.on_tick(ctx))?;
                let p = self.attackers[i].period().expect("ticking strategy has a period");
                self.fire[i] = Some(t + p);
            }
        }
    }

    /// Performs the victim's op at `t`. Returns its latency, or `None`
    /// after a page fault, in which case the op is retried later.
    fn victim_op(&mut self, op: Op, t: Cycle) -> Result<Option<u64>> {
        let (va, kind) = match op {
            Op::Compute => return Ok(Some(0)),
            Op::Access { va, kind } => (va, kind),
            Op::Flush { va } => (va, AccessKind::DataRead),
        };
        let m = &mut self.m;
        let tr = translate(&mut m.victim, va, kind, &mut m.tlbs[0], &m.cfg.tlb)?;
        if let Some(fault) = tr.fault {
            let page = va.page();
            m.acct.latency += tr.latency;
            m.log.push(t, VICTIM_ID, EventKind::PageFault { page, fault });
            m.victim_next = t + tr.latency;
            m.victim_aex(t, AexReason::PageFault);
            for i in 0..self.attackers.len() {
                self.call(i, t, |a, ctx| a.on_page_fault(ctx, page))?;
            }
            if self.m.victim.is_trapped(page) {
                self.m.victim.restore(page)?;
                self.m.log.push(t, VICTIM_ID, EventKind::TrapRestored { page });
            }
            return Ok(None);
        }
        let pa = tr.phys.expect("translation without fault has an address");
        let (latency, cache, row) = match op {
            Op::Flush { .. } => {
                m.caches.flush_line(pa);
                (tr.latency + m.cfg.cache.l1d.latency, crate::cache::HitLevel::L1, None)
            }
            _ => {
                let mem = m.mem_access(0, pa, kind)?;
                (tr.latency + mem.latency, mem.level, mem.row)
            }
        };
        if m.logs_full() {
            let kind_ev = match op {
                Op::Flush { va } => EventKind::VictimFlush { va },
                _ => EventKind::VictimAccess {
                    va,
                    access: kind,
                    latency,
                    tlb: tr.tlb,
                    walked: tr.walked,
                    accessed_set: tr.accessed_set,
                    cache,
                    row,
                },
            };
            m.log.push(t, VICTIM_ID, kind_ev);
        }
        Ok(Some(latency))
    }
}

fn random_non_prm_line(cfg: &SimConfig, rng: &mut SimRng) -> PhysAddr {
    let lines = cfg.phys_bytes() >> LINE_SHIFT;
    loop {
        let pa = rng.random_range(0..lines) << LINE_SHIFT;
        if !cfg.prm.contains(pa) && pa >= 1 << (PAGE_SHIFT + 8) {
            return PhysAddr(pa);
        }
    }
}
