// SPDX-License-Identifier: Apache-2.0

//! Named experiments. Each builds its victim and attackers, runs them and
//! scores the outcome against the harness-held ground truth.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::analysis::AttackReport;
use crate::attacks::{Actors, Registry};
use crate::config::SimConfig;
use crate::engine::{Cycle, SimResult};
use crate::error::{Result, SimError};
use crate::victims::{Mark, VictimLayout};

mod binsearch;
mod bloom;
mod drama;
mod eddsa;
mod elgamal;
mod gap;
mod hunspell;
mod report;
mod tables;

pub use drama::two_modes;
pub use report::{Histogram, ScenarioReport, Table};

/// Inputs shared by every scenario.
#[derive(Clone, Debug)]
pub struct ScenarioInput {
    pub config: SimConfig,
    pub seed: u64,
    /// Scenario parameters; `null` for defaults.
    pub params: Value,
}

impl ScenarioInput {
    pub fn new(config: SimConfig, seed: u64) -> Self {
        ScenarioInput { config, seed, params: Value::Null }
    }

    pub fn with_params(mut self, params: Value) -> Self {
        self.params = params;
        self
    }

    fn params<T: DeserializeOwned + Default>(&self) -> Result<T> {
        if self.params.is_null() {
            return Ok(T::default());
        }
        serde_json::from_value(self.params.clone()).map_err(|e| SimError::BadParam(e.to_string()))
    }

    fn report(&self, name: &str, report: AttackReport) -> ScenarioReport {
        ScenarioReport {
            scenario: name.into(),
            seed: self.seed,
            config_digest: self.config.digest(),
            report,
            event_counts: BTreeMap::new(),
            details: BTreeMap::new(),
            table: None,
            histogram: None,
        }
    }

    fn attack(&self, name: &str, params: &Value, layout: &VictimLayout) -> Result<Actors> {
        Registry::default().build(name, params, layout, &self.config)
    }
}

pub trait Scenario: Send + Sync {
    fn name(&self) -> &'static str;

    fn description(&self) -> &'static str;

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport>;
}

pub struct ScenarioRegistry {
    scenarios: BTreeMap<&'static str, Box<dyn Scenario>>,
}

impl ScenarioRegistry {
    pub fn empty() -> Self {
        ScenarioRegistry { scenarios: BTreeMap::new() }
    }

    pub fn register(&mut self, s: Box<dyn Scenario>) {
        self.scenarios.insert(s.name(), s);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.scenarios.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<&dyn Scenario> {
        self.scenarios
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| SimError::Unknown { kind: "scenario", name: name.into() })
    }

    pub fn run(&self, name: &str, input: &ScenarioInput) -> Result<ScenarioReport> {
        let s = self.get(name)?;
        input.config.validate()?;
        s.run(input)
    }
}

impl Default for ScenarioRegistry {
    fn default() -> Self {
        let mut r = ScenarioRegistry::empty();
        for s in eddsa::all() {
            r.register(s);
        }
        r.register(Box::new(hunspell::HunspellBspm));
        r.register(Box::new(hunspell::HunspellHtspm));
        r.register(Box::new(bloom::BloomTspm));
        r.register(Box::new(elgamal::ElgamalPp));
        r.register(Box::new(gap::GapCacheDram));
        r.register(Box::new(drama::DramaHist));
        r.register(Box::new(binsearch::TlbBinsearch));
        r.register(Box::new(tables::GranularityTable));
        r.register(Box::new(tables::RowRangeTable));
        r
    }
}

/// Attack-level fields of a finished run.
fn base_report(r: &SimResult, granularity: u64) -> AttackReport {
    AttackReport::new(r.attack_aex, r.slowdown(), granularity)
}

/// Event counts plus the AEX breakdown and cycle totals.
fn fill_run(rep: &mut ScenarioReport, r: &SimResult) {
    rep.event_counts = r.event_log.counts();
    let d = &mut rep.details;
    d.insert("attacked_cycles".into(), r.attacked_cycles.into());
    d.insert("baseline_cycles".into(), r.baseline_cycles.into());
    d.insert("aex_total".into(), r.aex.total.into());
    d.insert("aex_page_fault".into(), r.aex.page_fault.into());
    d.insert("aex_shootdown".into(), r.aex.ipi_shootdown.into());
    d.insert("aex_other".into(), r.aex.other.into());
    d.insert("log_digest".into(), r.event_log.digest().into());
}

/// Start cycle of each marked unit, indexed by unit id.
fn unit_starts(marks: &[(Cycle, Mark)]) -> Vec<Cycle> {
    let mut v: Vec<(u32, Cycle)> =
        marks.iter().filter_map(|&(t, m)| if let Mark::Begin(i) = m { Some((i, t)) } else { None }).collect();
    v.sort_unstable();
    v.into_iter().map(|x| x.1).collect()
}

/// Index of the unit running at `t`: the last one started at or before it.
fn unit_at(starts: &[Cycle], t: Cycle) -> Option<usize> {
    starts.partition_point(|&s| s <= t).checked_sub(1)
}

/// Bit error rate that counts missing or extra bits as errors.
fn padded_ber(recovered: &[bool], truth: &[bool]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let common = recovered.iter().zip(truth).filter(|(a, b)| a != b).count();
    let extra = recovered.len().abs_diff(truth.len());
    (common + extra) as f64 / truth.len().max(recovered.len()) as f64
}
