// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{base_report, fill_run, unit_at, unit_starts, Scenario, ScenarioInput, ScenarioReport};
use crate::analysis::{confusion, spatial_accuracy, AttackVector};
use crate::attacks::Observation;
use crate::engine::run_scenario;
use crate::error::{Result, SimError};
use crate::victims::{gap, Truth};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    invocations: usize,
    p_small: f64,
    period: u64,
    attack: Value,
}

impl Default for Params {
    fn default() -> Self {
        Params { invocations: 10_000, p_small: 0.5, period: gap::INVOCATION_PERIOD, attack: Value::Null }
    }
}

pub struct GapCacheDram;

impl Scenario for GapCacheDram {
    fn name(&self) -> &'static str {
        "gap-cachedram"
    }

    fn description(&self) -> &'static str {
        "Input-dependent branch in a big-integer routine detected by the cache-DRAM attack"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let p: Params = input.params()?;
        if !(0.0..=1.0).contains(&p.p_small) {
            return Err(SimError::BadParam("p_small must be within [0, 1]".into()));
        }
        let layout = gap::default_layout();
        let prog = gap::gap_session(p.invocations, p.p_small, &layout, p.period, input.seed)?;
        let r = run_scenario(&input.config, &prog, input.attack("cache-dram", &p.attack, &layout)?, input.seed)?;
        let Some(Observation::Detections(det)) = r.observation("cache-dram") else {
            return Err(SimError::NotFound("cache-dram observation".into()));
        };
        let starts = unit_starts(&r.marks);
        let mut predicted = vec![false; p.invocations];
        for &t in det {
            if let Some(i) = unit_at(&starts, t) {
                predicted[i] = true;
            }
        }
        let Truth::Branches(taken) = prog.secret.reveal() else { unreachable!("gap session holds branches") };
        let c = confusion(&predicted, taken)?;
        let mut a = base_report(&r, spatial_accuracy(AttackVector::CacheDram, &input.config));
        a.coverage = Some(c.coverage());
        a.precision = Some(c.precision());
        let mut rep = input.report(self.name(), a);
        fill_run(&mut rep, &r);
        let d = &mut rep.details;
        d.insert("invocations".into(), p.invocations.into());
        d.insert("taken".into(), taken.iter().filter(|&&t| t).count().into());
        d.insert("detections".into(), det.len().into());
        d.insert("detection_rate".into(), c.coverage().into());
        d.insert("false_positive_rate".into(), c.false_positive_rate().into());
        Ok(rep)
    }
}
