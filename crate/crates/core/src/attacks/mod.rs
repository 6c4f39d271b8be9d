// SPDX-License-Identifier: Apache-2.0

//! Attack strategies: a common trait, a name registry and the decoders
//! that turn observation traces into recovered secrets.

use std::collections::{BTreeMap, BTreeSet};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::addr::VirtPage;
use crate::config::SimConfig;
use crate::engine::{AttackCtx, Cycle};
use crate::error::{Result, SimError};
use crate::victims::VictimLayout;

pub mod bspm;
pub mod cache_dram;
pub mod classify;
mod clock;
pub mod drama;
pub mod htspm;
pub mod page_fault;
pub mod prime_probe;
pub mod tlb_probe;
pub mod tspm;

pub use clock::SmuggledClock;

/// Where an attacker runs relative to the victim.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// Sibling hyperthread of the victim's core.
    pub colocated: bool,
    /// Runs inside its own enclave (PRM memory, smuggled clock).
    pub enclave: bool,
}

/// Everything an attacker records. Decoders work from this alone.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "kebab-case")]
pub enum Observation {
    #[default]
    None,
    Faults(Vec<(Cycle, VirtPage)>),
    PageSets(Vec<(Cycle, BTreeSet<VirtPage>)>),
    /// (cycle, alpha/beta pair index, duration)
    Timings(Vec<(Cycle, u32, u64)>),
    ProbeMisses(Vec<(Cycle, Vec<u32>)>),
    Latencies(Vec<(Cycle, u64)>),
    Detections(Vec<Cycle>),
}

impl Observation {
    pub fn len(&self) -> usize {
        match self {
            Observation::None => 0,
            Observation::Faults(v) => v.len(),
            Observation::PageSets(v) => v.len(),
            Observation::Timings(v) => v.len(),
            Observation::ProbeMisses(v) => v.len(),
            Observation::Latencies(v) => v.len(),
            Observation::Detections(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// An attacker actor. The engine calls `on_tick` at `phase + k * period`
/// for k >= 1, and `on_page_fault` whenever a victim access faults.
pub trait AttackStrategy: Send {
    fn name(&self) -> &str;

    fn placement(&self) -> Placement {
        Placement::default()
    }

    /// Probe period in cycles; `None` for purely reactive strategies.
    fn period(&self) -> Option<Cycle>;

    fn phase(&self) -> Cycle {
        0
    }

    fn setup(&mut self, _ctx: &mut AttackCtx<'_>) -> Result<()> {
        Ok(())
    }

    fn on_tick(&mut self, _ctx: &mut AttackCtx<'_>) -> Result<()> {
        Ok(())
    }

    fn on_page_fault(&mut self, _ctx: &mut AttackCtx<'_>, _page: VirtPage) -> Result<()> {
        Ok(())
    }

    fn on_victim_exit(&mut self, _ctx: &mut AttackCtx<'_>) -> Result<()> {
        Ok(())
    }

    fn observation(&self) -> Observation;
}

pub type Actors = Vec<Box<dyn AttackStrategy>>;

type Builder = fn(&serde_json::Value, &VictimLayout, &SimConfig) -> Result<Actors>;

/// Strategies by name, each built from JSON parameters.
pub struct Registry {
    builders: BTreeMap<&'static str, Builder>,
}

impl Registry {
    pub fn empty() -> Self {
        Registry { builders: BTreeMap::new() }
    }

    pub fn register(&mut self, name: &'static str, b: Builder) {
        self.builders.insert(name, b);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.builders.keys().copied()
    }

    pub fn build(
        &self,
        name: &str,
        params: &serde_json::Value,
        layout: &VictimLayout,
        cfg: &SimConfig,
    ) -> Result<Actors> {
        let b = self.builders.get(name).ok_or_else(|| SimError::Unknown { kind: "attack", name: name.into() })?;
        b(params, layout, cfg)
    }
}

impl Default for Registry {
    fn default() -> Self {
        let mut r = Registry::empty();
        r.register("page-fault", page_fault::build);
        r.register("b-spm", bspm::build);
        r.register("t-spm", tspm::build);
        r.register("ht-spm", htspm::build);
        r.register("prime-probe", prime_probe::build);
        r.register("drama", drama::build);
        r.register("cache-dram", cache_dram::build);
        r.register("tlb-probe", tlb_probe::build);
        r
    }
}

/// Deserializes strategy parameters; `null` means all defaults.
pub(crate) fn params<T: DeserializeOwned + Default>(v: &serde_json::Value) -> Result<T> {
    if v.is_null() {
        return Ok(T::default());
    }
    serde_json::from_value(v.clone()).map_err(|e| SimError::BadParam(e.to_string()))
}

pub(crate) fn resolve_pages(layout: &VictimLayout, names: &[String]) -> Result<Vec<VirtPage>> {
    let mut out = Vec::new();
    for n in names {
        match layout.groups.get(n) {
            Some(g) => out.extend(g.iter().copied()),
            None => out.push(layout.page(n)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_all() {
        let names: Vec<_> = Registry::default().names().collect();
        assert_eq!(
            names,
            ["b-spm", "cache-dram", "drama", "ht-spm", "page-fault", "prime-probe", "t-spm", "tlb-probe"]
        );
    }

    #[test]
    fn unknown_attack_rejected() {
        let r = Registry::default();
        let e = r.build("flush-reload", &serde_json::Value::Null, &VictimLayout::new(1, 1), &SimConfig::default());
        assert!(matches!(e, Err(SimError::Unknown { .. })));
    }
}
