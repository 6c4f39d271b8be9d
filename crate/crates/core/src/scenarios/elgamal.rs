// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{base_report, fill_run, padded_ber, Scenario, ScenarioInput, ScenarioReport};
use crate::analysis::{bit_string, spatial_accuracy, AttackVector};
use crate::attacks::prime_probe;
use crate::engine::run_scenario;
use crate::error::{Result, SimError};
use crate::rng::{stream_rng, streams};
use crate::victims::{eddsa::random_key, modexp, Truth};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    bits: usize,
    attack: Value,
}

impl Default for Params {
    fn default() -> Self {
        Params { bits: 403, attack: Value::Null }
    }
}

pub struct ElgamalPp;

impl Scenario for ElgamalPp {
    fn name(&self) -> &'static str {
        "elgamal-pp"
    }

    fn description(&self) -> &'static str {
        "Square-and-multiply exponent recovered by cross-enclave LLC Prime+Probe"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let p: Params = input.params()?;
        if p.bits == 0 {
            return Err(SimError::BadParam("bits must be positive".into()));
        }
        let layout = modexp::default_layout();
        let key = random_key(&mut stream_rng(input.seed, streams::VICTIM_GEN), p.bits);
        let prog = modexp::modexp(&key, &layout)?;
        let r = run_scenario(&input.config, &prog, input.attack("prime-probe", &p.attack, &layout)?, input.seed)?;
        let obs = r.observation("prime-probe").ok_or(SimError::NotFound("prime-probe observation".into()))?;
        let recovered = prime_probe::decode_square_multiply(obs);
        let Truth::Bits(truth) = prog.secret.reveal() else { unreachable!("exponent holds bits") };
        let mut a = base_report(&r, spatial_accuracy(AttackVector::L3PrimeProbe, &input.config));
        a.recovered_secret = Some(bit_string(&recovered));
        a.bit_error_rate = Some(padded_ber(&recovered, truth));
        let mut rep = input.report(self.name(), a);
        fill_run(&mut rep, &r);
        rep.details.insert("key_bits".into(), truth.len().into());
        rep.details.insert("recovered_bits".into(), recovered.len().into());
        rep.details.insert("probe_rounds".into(), obs.len().into());
        Ok(rep)
    }
}
