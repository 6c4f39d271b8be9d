// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{base_report, fill_run, Histogram, Scenario, ScenarioInput, ScenarioReport};
use crate::analysis::{confusion, spatial_accuracy, AttackVector};
use crate::attacks::Observation;
use crate::dram::RowOutcome;
use crate::engine::{run_scenario, EventKind};
use crate::error::{Result, SimError};
use crate::victims::gap;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Params {
    probes: u64,
    period: u64,
    bin_width: u64,
}

impl Default for Params {
    fn default() -> Self {
        Params { probes: 100_000, period: 400, bin_width: 4 }
    }
}

/// Peak bins of the two clusters found by 1-D two-means over the
/// histogram, as bin centres, lower first.
pub fn two_modes(h: &Histogram) -> Option<(f64, f64)> {
    let centre = |l: u64| l as f64 + h.bin_width as f64 / 2.0;
    let (first, last) = (h.bins.first()?.0, h.bins.last()?.0);
    if first == last {
        return None;
    }
    let (mut a, mut b) = (centre(first), centre(last));
    for _ in 0..64 {
        let (mut sa, mut na, mut sb, mut nb) = (0.0, 0.0, 0.0, 0.0);
        for &(l, c) in &h.bins {
            let x = centre(l);
            if (x - a).abs() <= (x - b).abs() {
                sa += x * c as f64;
                na += c as f64;
            } else {
                sb += x * c as f64;
                nb += c as f64;
            }
        }
        if na == 0.0 || nb == 0.0 {
            return None;
        }
        let (na2, nb2) = (sa / na, sb / nb);
        if (na2, nb2) == (a, b) {
            break;
        }
        (a, b) = (na2, nb2);
    }
    let split = (a + b) / 2.0;
    let peak = |lo: bool| {
        h.bins
            .iter()
            .filter(|&&(l, _)| (centre(l) < split) == lo)
            .max_by_key(|&&(l, c)| (c, std::cmp::Reverse(l)))
            .map(|&(l, _)| centre(l))
    };
    Some((peak(true)?, peak(false)?))
}

pub struct DramaHist;

impl Scenario for DramaHist {
    fn name(&self) -> &'static str {
        "drama-hist"
    }

    fn description(&self) -> &'static str {
        "Latency histogram of same-row and different-row DRAM probes from an enclave"
    }

    fn run(&self, input: &ScenarioInput) -> Result<ScenarioReport> {
        let p: Params = input.params()?;
        if p.probes == 0 || p.period == 0 {
            return Err(SimError::BadParam("probes and period must be positive".into()));
        }
        let layout = gap::default_layout();
        let invocations = (p.probes * p.period).div_ceil(gap::INVOCATION_PERIOD) as usize + 1;
        let prog = gap::gap_session(invocations, 0.5, &layout, gap::INVOCATION_PERIOD, input.seed)?;
        let attack = json!({ "period": p.period, "mode": "histogram" });
        let r = run_scenario(&input.config, &prog, input.attack("drama", &attack, &layout)?, input.seed)?;
        let Some(Observation::Latencies(lat)) = r.observation("drama") else {
            return Err(SimError::NotFound("drama observation".into()));
        };
        let lat: Vec<u64> = lat.iter().take(p.probes as usize).map(|x| x.1).collect();
        let truth: Vec<bool> = r
            .event_log
            .events()
            .iter()
            .filter_map(|e| match e.kind {
                EventKind::AttackerDram { row, .. } if e.actor == 1 => Some(row == RowOutcome::Hit),
                _ => None,
            })
            .take(lat.len())
            .collect();
        let hist = Histogram::from_values(lat.iter().copied(), p.bin_width);
        let (lo, hi) = two_modes(&hist).ok_or(SimError::NotFound("two latency modes".into()))?;
        let threshold = (lo + hi) / 2.0;
        let predicted: Vec<bool> = lat.iter().map(|&l| (l as f64) < threshold).collect();
        let c = confusion(&predicted, &truth)?;
        let mut a = base_report(&r, spatial_accuracy(AttackVector::Drama, &input.config));
        a.coverage = Some(c.coverage());
        a.precision = Some(c.precision());
        let mut rep = input.report(self.name(), a);
        fill_run(&mut rep, &r);
        let d = &mut rep.details;
        d.insert("probes".into(), lat.len().into());
        d.insert("hit_mode".into(), lo.into());
        d.insert("conflict_mode".into(), hi.into());
        d.insert("threshold".into(), threshold.into());
        d.insert("accuracy".into(), c.accuracy().into());
        d.insert("row_hits".into(), truth.iter().filter(|&&h| h).count().into());
        rep.histogram = Some(hist);
        Ok(rep)
    }
}
