// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{base_report, fill_run, padded_ber, Scenario, ScenarioInput, ScenarioReport};
use crate::addr::PAGE_SIZE;
use crate::analysis::bit_string;
use crate::attacks::classify::midpoint_threshold;
use crate::attacks::{bspm, page_fault, tspm};
use crate::engine::{run_once, run_scenario};
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, streams};
use crate::victims::{eddsa, Truth};

/// Calibration key length for the timing attack.
const CALIBRATION_BITS: usize = 64;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    bits: usize,
    attack: Value,
}

impl Default for Params {
    fn default() -> Self {
        Params { bits: eddsa::MAX_BITS, attack: Value::Null }
    }
}

pub struct EddsaScenario {
    name: &'static str,
    attack: &'static str,
}

pub fn all() -> Vec<Box<dyn Scenario>> {
    [("eddsa-pf", "page-fault"), ("eddsa-bspm", "b-spm"), ("eddsa-tspm", "t-spm")]
        .into_iter()
        .map(|(name, attack)| Box::new(EddsaScenario { name, attack }) as Box<dyn Scenario>)
        .collect()
}

fn key_bits(p: &crate::victims::VictimProgram) -> Vec<bool> {
    match p.secret.reveal() {
        Truth::Bits(b) => b.clone(),
        _ => unreachable!("scalar multiplication holds a key"),
    }
}

impl EddsaScenario {
    /// Duration threshold learned from a run on a key the attacker chose.
    fn tspm_threshold(&self, input: &ScenarioInput, params: &Value) -> Result<f64> {
        let layout = eddsa::default_layout();
        let key = eddsa::random_key(&mut stream_rng(input.seed, streams::CALIBRATION), CALIBRATION_BITS);
        let prog = eddsa::eddsa_scalar_mul(&key, &layout)?;
        let out = run_once(&input.config, &prog, input.attack(self.attack, params, &layout)?, input.seed ^ 0x5eed)?;
        let (_, obs) = out.observations.first().ok_or(SimError::NotFound("calibration observation".into()))?;
        let d = tspm::durations(obs, 0);
        let (mut zero, mut one) = (Vec::new(), Vec::new());
        for (dur, &bit) in d.iter().zip(&key) {
            if bit {
                one.push(*dur as f64)
            } else {
                zero.push(*dur as f64)
            }
        }
        midpoint_threshold(&zero, &one)
    }
}

impl Scenario for EddsaScenario {
    fn name(&self) -> &'static str {
        self.name
    }

    fn description(&self) -> &'static str {
        match self.attack {
            "page-fault" => "EdDSA scalar multiplication under the page-fault attack",
            "b-spm" => "EdDSA scalar multiplication under basic sneaky page monitoring",
            _ => "EdDSA scalar multiplication under timing-enhanced page monitoring",
        }
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let p: Params = input.params()?;
        if p.bits == 0 || p.bits > eddsa::MAX_BITS {
            return Err(SimError::BadParam(format!("bits must be within 1..={}", eddsa::MAX_BITS)));
        }
        let layout = eddsa::default_layout();
        let key = eddsa::random_key(&mut stream_rng(input.seed, streams::VICTIM_GEN), p.bits);
        let prog = eddsa::eddsa_scalar_mul(&key, &layout)?;
        let threshold = if self.attack == "t-spm" { Some(self.tspm_threshold(input, &p.attack)?) } else { None };
        let r = run_scenario(&input.config, &prog, input.attack(self.attack, &p.attack, &layout)?, input.seed)?;
        let obs = r.observation(self.attack).ok_or(SimError::NotFound(format!("{} observation", self.attack)))?;
        let recovered = match (self.attack, threshold) {
            ("page-fault", _) => page_fault::decode_eddsa(obs, &layout)?,
            ("b-spm", _) => bspm::decode_eddsa(obs, &layout)?,
            (_, Some(th)) => tspm::durations(obs, 0).into_iter().map(|d| d as f64 > th).collect(),
            _ => unreachable!("threshold computed for t-spm"),
        };
        let truth = key_bits(&prog);
        let mut a = base_report(&r, PAGE_SIZE);
        a.recovered_secret = Some(bit_string(&recovered));
        a.bit_error_rate = Some(padded_ber(&recovered, &truth));
        let mut rep = input.report(self.name, a);
        fill_run(&mut rep, &r);
        rep.details.insert("key_bits".into(), truth.len().into());
        rep.details.insert("recovered_bits".into(), recovered.len().into());
        rep.details.insert("aex_per_bit".into(), (r.attack_aex as f64 / truth.len() as f64).into());
        if let Some(th) = threshold {
            rep.details.insert("duration_threshold".into(), th.into());
        }
        Ok(rep)
    }
}
