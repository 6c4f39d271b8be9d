// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use crate::engine::Cycle;
use crate::rng::{bernoulli, gaussian, SimRng};

/// Cycle counter smuggled into an enclave by a helper thread: jittered and
/// occasionally stale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmuggledClock {
    pub sigma: f64,
    pub stale_prob: f64,
    last: Option<Cycle>,
}

impl SmuggledClock {
    pub fn new(sigma: f64, stale_prob: f64) -> Self {
        SmuggledClock { sigma, stale_prob, last: None }
    }

    pub fn exact() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn last(&self) -> Option<Cycle> {
        self.last
    }

    pub fn read(&mut self, true_cycle: Cycle, rng: &mut SimRng) -> Cycle {
        if let Some(prev) = self.last {
            if bernoulli(rng, self.stale_prob) {
                return prev;
            }
        }
        let v = (true_cycle as f64 + gaussian(rng, self.sigma)).round().max(0.0) as Cycle;
        self.last = Some(v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    #[test]
    fn exact_clock() {
        let mut c = SmuggledClock::exact();
        let mut r = stream_rng(1, 1);
        assert_eq!(c.read(1234, &mut r), 1234);
        assert_eq!(c.read(99, &mut r), 99);
    }

    #[test]
    fn stale_repeats_previous() {
        let mut c = SmuggledClock::new(0.0, 1.0);
        let mut r = stream_rng(1, 1);
        assert_eq!(c.read(10, &mut r), 10);
        assert_eq!(c.read(500, &mut r), 10);
    }

    #[test]
    fn jitter_within_three_sigma() {
        let mut c = SmuggledClock::new(8.0, 0.0);
        let mut r = stream_rng(7, 4);
        let n = 100_000;
        let within = (0..n).filter(|&i| {
            let t = 1_000_000 + i * 10;
            c.read(t, &mut r).abs_diff(t) <= 24
        });
        assert!(within.count() as f64 >= 0.99 * n as f64);
    }
}
