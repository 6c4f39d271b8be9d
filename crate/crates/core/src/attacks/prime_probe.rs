// SPDX-License-Identifier: Apache-2.0

//! Cross-enclave Prime+Probe on the LLC sets of chosen victim code lines.

use serde::{Deserialize, Serialize};

use crate::addr::{PhysAddr, VirtAddr, LINE_SIZE};
use crate::attacks::{params, Actors, AttackStrategy, Observation, Placement};
use crate::cache::llc_set_of;
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::Result;
use crate::victims::{modexp, VictimLayout};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// Victim symbols whose LLC sets are monitored.
    pub targets: Vec<String>,
    pub period: Cycle,
    /// Latency above which a probe counts as a miss; defaults to halfway
    /// between an LLC hit and a DRAM row hit.
    pub threshold: Option<u64>,
}

impl Default for Params {
    fn default() -> Self {
        Params { targets: vec![modexp::SQUARE.into(), modexp::MULTIPLY.into()], period: 500, threshold: None }
    }
}

pub fn build(p: &serde_json::Value, layout: &VictimLayout, cfg: &SimConfig) -> Result<Actors> {
    let p: Params = params(p)?;
    let targets = p.targets.iter().map(|t| layout.symbol(t)).collect::<Result<Vec<_>>>()?;
    let threshold = p.threshold.unwrap_or_else(|| llc_miss_threshold(cfg));
    Ok(vec![Box::new(PrimeProbe::new(targets, p.period, threshold))])
}

pub fn llc_miss_threshold(cfg: &SimConfig) -> u64 {
    let c = &cfg.cache;
    c.l1d.latency + c.l2.latency + c.l3.latency + cfg.dram.latency_hit / 2
}

pub struct PrimeProbe {
    targets: Vec<VirtAddr>,
    period: Cycle,
    threshold: u64,
    sets: Vec<Vec<VirtAddr>>,
    rounds: Vec<(Cycle, Vec<u32>)>,
}

impl PrimeProbe {
    pub fn new(targets: Vec<VirtAddr>, period: Cycle, threshold: u64) -> Self {
        PrimeProbe { targets, period, threshold, sets: Vec::new(), rounds: Vec::new() }
    }
}

/// Allocates `ways` attacker lines congruent with `target` in the LLC.
pub fn build_llc_eviction_set(ctx: &mut AttackCtx<'_>, target: PhysAddr) -> Result<Vec<VirtAddr>> {
    let cache = ctx.config().cache.clone();
    let want = llc_set_of(target, &cache);
    let off = target.offset() & !(LINE_SIZE - 1);
    let pred = move |f| llc_set_of(PhysAddr::from_frame(f, off), &cache) == want;
    let ways = ctx.config().cache.l3.ways as usize;
    let pages = ctx.alloc_pages_where(ways, 1, &pred)?;
    Ok(pages.into_iter().map(|p| VirtAddr::from_page(p, off)).collect())
}

impl AttackStrategy for PrimeProbe {
    fn name(&self) -> &str {
        "prime-probe"
    }

    fn placement(&self) -> Placement {
        Placement { colocated: false, enclave: true }
    }

    fn period(&self) -> Option<Cycle> {
        Some(self.period)
    }

    fn setup(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        for &t in &self.targets.clone() {
            let pa = ctx.victim_phys(t)?;
            let set = build_llc_eviction_set(ctx, pa)?;
            for &l in &set {
                ctx.timed_access(l)?;
            }
            self.sets.push(set);
        }
        Ok(())
    }

    /// Probing re-fills the set, so each probe also primes the next round.
    fn on_tick(&mut self, ctx: &mut AttackCtx<'_>) -> Result<()> {
        let mut misses = Vec::with_capacity(self.sets.len());
        for set in &self.sets {
            let mut m = 0;
            for &l in set {
                if ctx.timed_access(l)? > self.threshold {
                    m += 1;
                }
            }
            misses.push(m);
        }
        self.rounds.push((ctx.now(), misses));
        Ok(())
    }

    fn observation(&self) -> Observation {
        Observation::ProbeMisses(self.rounds.clone())
    }
}

/// Runs of activity in channel `ch`: `(first, last)` round indices, where
/// runs separated by at most `max_gap` idle rounds are joined and runs
/// shorter than `min_len` rounds are dropped.
pub fn activity_runs(rounds: &[(Cycle, Vec<u32>)], ch: usize, max_gap: usize, min_len: usize) -> Vec<(usize, usize)> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, (_, m)) in rounds.iter().enumerate() {
        if m.get(ch).copied().unwrap_or(0) == 0 {
            continue;
        }
        match runs.last_mut() {
            Some(r) if i - r.1 <= max_gap + 1 => r.1 = i,
            _ => runs.push((i, i)),
        }
    }
    runs.retain(|r| r.1 - r.0 + 1 >= min_len);
    runs
}

/// Square-and-multiply: each square run starts a bit, which is 1 when a
/// multiply run comes next.
pub fn decode_square_multiply(obs: &Observation) -> Vec<bool> {
    let Observation::ProbeMisses(rounds) = obs else { return Vec::new() };
    let mut runs: Vec<(usize, u8)> = activity_runs(rounds, 0, 1, 2).into_iter().map(|r| (r.0, 0)).collect();
    runs.extend(activity_runs(rounds, 1, 1, 2).into_iter().map(|r| (r.0, 1)));
    runs.sort_unstable();
    runs.iter().enumerate().filter(|(_, r)| r.1 == 0).map(|(i, _)| runs.get(i + 1).is_some_and(|n| n.1 == 1)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rounds(s: &str, m: &str) -> Vec<(Cycle, Vec<u32>)> {
        s.chars().zip(m.chars()).map(|(a, b)| (0, vec![u32::from(a == '#'), u32::from(b == '#')])).collect()
    }

    #[test]
    fn runs_join_small_gaps_and_drop_blips() {
        let r = rounds("##.##...#....", ".............");
        assert_eq!(activity_runs(&r, 0, 1, 2), [(0, 4)]);
    }

    #[test]
    fn decode_bits() {
        //                 bit1          bit0     bit1
        let r = rounds("####.......####...####.......", ".....####..........  ....####");
        let r: Vec<_> = r.into_iter().collect();
        assert_eq!(decode_square_multiply(&Observation::ProbeMisses(r)), [true, false, true]);
    }
}
