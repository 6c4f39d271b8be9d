// SPDX-License-Identifier: Apache-2.0

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{base_report, fill_run, unit_at, unit_starts, Histogram, Scenario, ScenarioInput, ScenarioReport};
use crate::addr::PAGE_SIZE;
use crate::analysis::confusion;
use crate::attacks::classify::midpoint_threshold;
use crate::attacks::{Observation, Registry};
use crate::config::SimConfig;
use crate::engine::{run_once, run_scenario, Cycle, RunOutput};
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, streams};
use crate::victims::bloom::{self as victim, BloomFilter};
use crate::victims::{Truth, VictimProgram};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    members: usize,
    queries: usize,
    p_member: f64,
    gap: (u64, u64),
    calibration_queries: usize,
    bin_width: u64,
    attack: Value,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            members: 1000,
            queries: 1000,
            p_member: 0.5,
            gap: (2000, 4000),
            calibration_queries: 200,
            bin_width: 100,
            attack: Value::Null,
        }
    }
}

fn default_attack() -> Value {
    json!({ "alpha": ["hash"], "beta": ["exit"], "mode": "interval", "period": 132 })
}

/// A filter over `members` random keys and a query mix drawn from it.
fn workload(p: &Params, seed: u64, stream: u64, queries: usize) -> (BloomFilter, Vec<u64>) {
    let mut rng = stream_rng(seed, stream);
    let members: Vec<u64> = (0..p.members).map(|_| rng.random()).collect();
    let filter = BloomFilter::for_members(&members, rng.random());
    let q = (0..queries)
        .map(|_| if rng.random_bool(p.p_member) { members[rng.random_range(0..members.len())] } else { rng.random() })
        .collect();
    (filter, q)
}

fn membership(prog: &VictimProgram) -> Vec<bool> {
    match prog.secret.reveal() {
        Truth::Members(m) => m.clone(),
        _ => unreachable!("bloom session holds membership"),
    }
}

/// Duration observed for each query, if any.
fn per_query(obs: Option<&Observation>, marks: &[(Cycle, crate::victims::Mark)], n: usize) -> Vec<Option<u64>> {
    let starts = unit_starts(marks);
    let mut out = vec![None; n];
    if let Some(Observation::Timings(t)) = obs {
        for &(c, _, d) in t {
            if let Some(i) = unit_at(&starts, c) {
                out[i].get_or_insert(d);
            }
        }
    }
    out
}

fn run_calibration(cfg: &SimConfig, p: &Params, attack: &Value, seed: u64) -> Result<f64> {
    let (filter, q) = workload(p, seed, streams::CALIBRATION, p.calibration_queries);
    let layout = victim::default_layout();
    let prog = victim::bloom_session(&q, &filter, &layout, p.gap, seed ^ 0xca1)?;
    let actors = Registry::default().build("t-spm", attack, &layout, cfg)?;
    let out: RunOutput = run_once(cfg, &prog, actors, seed ^ 0xca1)?;
    let obs = out.observations.first().map(|o| &o.1);
    let (mut neg, mut pos) = (Vec::new(), Vec::new());
    for (d, m) in per_query(obs, &out.marks, q.len()).into_iter().zip(q.iter().map(|&x| filter.contains(x))) {
        if let Some(d) = d {
            if m {
                pos.push(d as f64)
            } else {
                neg.push(d as f64)
            }
        }
    }
    midpoint_threshold(&neg, &pos)
}

pub struct BloomTspm;

impl Scenario for BloomTspm {
    fn name(&self) -> &'static str {
        "bloom-tspm"
    }

    fn description(&self) -> &'static str {
        "Bloom filter membership inferred from hashing time on one code page"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let p: Params = input.params()?;
        if p.members == 0 || p.queries == 0 || p.calibration_queries == 0 {
            return Err(SimError::BadParam("members and queries must be positive".into()));
        }
        let attack = if p.attack.is_null() { default_attack() } else { p.attack.clone() };
        let threshold = run_calibration(&input.config, &p, &attack, input.seed)?;
        let (filter, q) = workload(&p, input.seed, streams::VICTIM_GEN + 21, p.queries);
        let layout = victim::default_layout();
        let prog = victim::bloom_session(&q, &filter, &layout, p.gap, input.seed)?;
        let r = run_scenario(&input.config, &prog, input.attack("t-spm", &attack, &layout)?, input.seed)?;
        let durs = per_query(r.observation("t-spm"), &r.marks, q.len());
        let predicted: Vec<bool> = durs.iter().map(|d| d.is_some_and(|d| d as f64 > threshold)).collect();
        let truth = membership(&prog);
        let c = confusion(&predicted, &truth)?;
        let nc = c.inverted();
        let mut a = base_report(&r, PAGE_SIZE);
        a.coverage = Some(c.coverage());
        a.precision = Some(c.precision());
        let mut rep = input.report(self.name(), a);
        fill_run(&mut rep, &r);
        let d = &mut rep.details;
        d.insert("threshold".into(), threshold.into());
        d.insert("member_coverage".into(), c.coverage().into());
        d.insert("member_precision".into(), c.precision().into());
        d.insert("nonmember_coverage".into(), nc.coverage().into());
        d.insert("nonmember_precision".into(), nc.precision().into());
        d.insert("members_queried".into(), truth.iter().filter(|&&m| m).count().into());
        d.insert("timed_queries".into(), durs.iter().flatten().count().into());
        rep.histogram = Some(Histogram::from_values(durs.into_iter().flatten(), p.bin_width));
        Ok(rep)
    }
}
