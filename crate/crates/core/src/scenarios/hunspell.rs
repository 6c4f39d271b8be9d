// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{base_report, fill_run, unit_at, unit_starts, Scenario, ScenarioInput, ScenarioReport};
use crate::addr::{VirtPage, PAGE_SIZE};
use crate::analysis::{signature_partition, Channel};
use crate::attacks::{htspm, Observation};
use crate::engine::{run_scenario, Cycle, SimResult};
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, streams};
use crate::victims::hunspell::{hunspell_session, DictionaryLayout};
use crate::victims::{Truth, VictimProgram};

const DICT_BASE: VirtPage = 0x800;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    queries: usize,
    dict_words: usize,
    dict_pages: u64,
    buckets: u32,
    gap: (u64, u64),
    /// Quiet time that separates two lookups in the HT-SPM trace.
    segment_gap: Cycle,
    attack: Value,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            queries: 100,
            dict_words: 5000,
            dict_pages: 200,
            buckets: 1024,
            gap: (12_000, 20_000),
            segment_gap: 3000,
            attack: Value::Null,
        }
    }
}

struct Setup {
    p: Params,
    dict: DictionaryLayout,
    prog: VictimProgram,
}

fn setup(input: &ScenarioInput) -> Result<Setup> {
    let p: Params = input.params()?;
    if p.queries == 0 || p.dict_words == 0 {
        return Err(SimError::BadParam("queries and dict_words must be positive".into()));
    }
    let dict = DictionaryLayout::generate(p.dict_words, p.dict_pages, p.buckets, DICT_BASE, input.seed)?;
    let mut rng = stream_rng(input.seed, streams::VICTIM_GEN + 11);
    let words: Vec<usize> = (0..p.queries).map(|_| rng.random_range(0..p.dict_words)).collect();
    let prog = hunspell_session(&words, &dict, p.gap, input.seed)?;
    Ok(Setup { p, dict, prog })
}

fn truth_sets(prog: &VictimProgram) -> &[BTreeSet<VirtPage>] {
    match prog.secret.reveal() {
        Truth::Words { page_sets, .. } => page_sets,
        _ => unreachable!("lookup session holds words"),
    }
}

/// Scores recovered per-lookup page sets and fills the shared fields.
fn finish(
    name: &str,
    input: &ScenarioInput,
    s: &Setup,
    r: &SimResult,
    recovered: &[BTreeSet<VirtPage>],
) -> ScenarioReport {
    let truth = truth_sets(&s.prog);
    let exact = truth.iter().zip(recovered).filter(|(t, r)| t == r).count();
    let mut a = base_report(r, PAGE_SIZE);
    a.coverage = Some(exact as f64 / truth.len() as f64);
    let mut rep = input.report(name, a);
    fill_run(&mut rep, r);
    let pf = signature_partition(&s.dict, Channel::PageFaultSequence);
    let bs = signature_partition(&s.dict, Channel::BspmPageSets);
    let d = &mut rep.details;
    d.insert("queries".into(), truth.len().into());
    d.insert("exact_page_sets".into(), exact.into());
    d.insert("recovered_lookups".into(), recovered.iter().filter(|x| !x.is_empty()).count().into());
    d.insert("dict_words".into(), s.p.dict_words.into());
    d.insert("unique_words_page_fault".into(), pf.unique_count().into());
    d.insert("unique_words_bspm".into(), bs.unique_count().into());
    rep
}

pub struct HunspellBspm;

impl Scenario for HunspellBspm {
    fn name(&self) -> &'static str {
        "hunspell-bspm"
    }

    fn description(&self) -> &'static str {
        "Spell-checker lookups observed by basic sneaky page monitoring"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let s = setup(input)?;
        let layout = &s.prog.layout;
        let mut attack = s.p.attack.clone();
        if attack.is_null() {
            attack = serde_json::json!({ "trigger": "trigger", "pages": ["dict"] });
        }
        let r = run_scenario(&input.config, &s.prog, input.attack("b-spm", &attack, layout)?, input.seed)?;
        let Some(Observation::PageSets(sets)) = r.observation("b-spm") else {
            return Err(SimError::NotFound("b-spm observation".into()));
        };
        // The first read precedes any lookup; each later one closes the
        // lookup before it.
        let recovered: Vec<_> = sets.iter().skip(1).map(|x| x.1.clone()).collect();
        Ok(finish(self.name(), input, &s, &r, &recovered))
    }
}

pub struct HunspellHtspm;

impl Scenario for HunspellHtspm {
    fn name(&self) -> &'static str {
        "hunspell-htspm"
    }

    fn description(&self) -> &'static str {
        "Spell-checker lookups observed by hyperthreaded page monitoring without shootdowns"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let s = setup(input)?;
        let r = run_scenario(&input.config, &s.prog, input.attack("ht-spm", &s.p.attack, &s.prog.layout)?, input.seed)?;
        let obs = r.observation("ht-spm").ok_or(SimError::NotFound("ht-spm observation".into()))?;
        let starts = unit_starts(&r.marks);
        let mut recovered = vec![BTreeSet::new(); starts.len()];
        for (t0, _, pages) in htspm::segments(obs, s.p.segment_gap) {
            if let Some(i) = unit_at(&starts, t0) {
                recovered[i].extend(pages);
            }
        }
        let mut rep = finish(self.name(), input, &s, &r, &recovered);
        rep.details.insert("segments".into(), htspm::segments(obs, s.p.segment_gap).len().into());
        Ok(rep)
    }
}
