// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{base_report, fill_run, unit_at, unit_starts, Scenario, ScenarioInput, ScenarioReport};
use crate::addr::PAGE_SIZE;
use crate::attacks::tlb_probe::active_sets;
use crate::engine::run_scenario;
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, streams};
use crate::victims::{binsearch, Truth};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    searches: usize,
    gap: u64,
    attack: Value,
}

impl Default for Params {
    fn default() -> Self {
        Params { searches: 100, gap: 5000, attack: Value::Null }
    }
}

pub struct TlbBinsearch;

impl Scenario for TlbBinsearch {
    fn name(&self) -> &'static str {
        "tlb-binsearch"
    }

    fn description(&self) -> &'static str {
        "Binary-search page sequence recovered by dTLB Prime+Probe from the sibling hyperthread"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let p: Params = input.params()?;
        if p.searches == 0 {
            return Err(SimError::BadParam("searches must be positive".into()));
        }
        let layout = binsearch::default_layout();
        let mut rng = stream_rng(input.seed, streams::VICTIM_GEN);
        let keys: Vec<u32> = (0..p.searches).map(|_| rng.random_range(0..binsearch::ENTRIES)).collect();
        let prog = binsearch::binsearch_session(&keys, &layout, p.gap)?;
        let r = run_scenario(&input.config, &prog, input.attack("tlb-probe", &p.attack, &layout)?, input.seed)?;
        let obs = r.observation("tlb-probe").ok_or(SimError::NotFound("tlb-probe observation".into()))?;
        let sets: Vec<u32> = match &p.attack {
            Value::Null => (0..input.config.tlb.dtlb.sets).collect(),
            v => {
                serde_json::from_value::<crate::attacks::tlb_probe::Params>(v.clone())
                    .map_err(|e| SimError::BadParam(e.to_string()))?
                    .dtlb_sets
            }
        };
        let table = binsearch::table_pages(&layout)?;
        let first_set = (table[0] % input.config.tlb.dtlb.sets as u64) as u32;
        let starts = unit_starts(&r.marks);
        let mut recovered = vec![Vec::new(); starts.len()];
        for (t, hit) in active_sets(obs, &sets) {
            if let Some(i) = unit_at(&starts, t) {
                recovered[i].extend(hit.iter().map(|s| s.wrapping_sub(first_set) % input.config.tlb.dtlb.sets));
            }
        }
        let Truth::Keys(truth) = prog.secret.reveal() else { unreachable!("search session holds keys") };
        let exact = truth.iter().zip(&recovered).filter(|(k, r)| binsearch::page_sequence(**k) == **r).count();
        let last_page =
            truth.iter().zip(&recovered).filter(|(k, r)| r.last() == Some(&(**k / binsearch::PER_PAGE))).count();
        let mut a = base_report(&r, PAGE_SIZE);
        a.coverage = Some(exact as f64 / truth.len() as f64);
        let mut rep = input.report(self.name(), a);
        fill_run(&mut rep, &r);
        let d = &mut rep.details;
        d.insert("searches".into(), truth.len().into());
        d.insert("exact_page_sequences".into(), exact.into());
        d.insert("final_page_correct".into(), last_page.into());
        Ok(rep)
    }
}
