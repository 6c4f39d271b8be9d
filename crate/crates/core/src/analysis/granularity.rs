// SPDX-License-Identifier: Apache-2.0

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::addr::{LINE_SIZE, PAGE_SIZE};
use crate::config::SimConfig;
use crate::error::SimError;

/// Fraction of a DRAM row an attacker can leave to the victim while
/// owning the rest of it.
const DRAMA_CHUNKS_PER_ROW: u64 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackVector {
    L1iPrimeProbe,
    L2PrimeProbe,
    L3PrimeProbe,
    PageFault,
    Spm,
    HtSpm,
    Drama,
    CacheDram,
}

impl AttackVector {
    pub const ALL: [AttackVector; 8] = [
        AttackVector::L1iPrimeProbe,
        AttackVector::L2PrimeProbe,
        AttackVector::L3PrimeProbe,
        AttackVector::PageFault,
        AttackVector::Spm,
        AttackVector::HtSpm,
        AttackVector::Drama,
        AttackVector::CacheDram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackVector::L1iPrimeProbe => "l1i-prime-probe",
            AttackVector::L2PrimeProbe => "l2-prime-probe",
            AttackVector::L3PrimeProbe => "l3-prime-probe",
            AttackVector::PageFault => "page-fault",
            AttackVector::Spm => "spm",
            AttackVector::HtSpm => "ht-spm",
            AttackVector::Drama => "drama",
            AttackVector::CacheDram => "cache-dram",
        }
    }
}

impl fmt::Display for AttackVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackVector {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        AttackVector::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| SimError::Unknown { kind: "attack vector", name: s.into() })
    }
}

/// Smallest memory unit, in bytes, that the vector tells apart inside the
/// PRM. Cache vectors see only the set index, so each set stands for
/// `PRM / sets` bytes.
pub fn spatial_accuracy(vector: AttackVector, cfg: &SimConfig) -> u64 {
    let prm = cfg.prm.size;
    let c = &cfg.cache;
    match vector {
        AttackVector::L1iPrimeProbe => prm / c.l1i.sets as u64,
        AttackVector::L2PrimeProbe => prm / c.l2.sets as u64,
        AttackVector::L3PrimeProbe => prm / c.l3.sets as u64,
        AttackVector::PageFault | AttackVector::Spm | AttackVector::HtSpm => PAGE_SIZE,
        AttackVector::Drama => cfg.dram.geometry.row_size / DRAMA_CHUNKS_PER_ROW,
        AttackVector::CacheDram => LINE_SIZE,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn testbed_column() {
        let c = SimConfig::testbed();
        let got: Vec<u64> = AttackVector::ALL.iter().map(|&v| spatial_accuracy(v, &c)).collect();
        assert_eq!(got, [2 << 20, 128 << 10, 16 << 10, 4096, 4096, 4096, 1024, 64]);
    }

    #[test]
    fn names_round_trip() {
        for v in AttackVector::ALL {
            assert_eq!(v.name().parse::<AttackVector>().unwrap(), v);
        }
        assert!("l4-prime-probe".parse::<AttackVector>().is_err());
    }

    proptest! {
        #[test]
        fn finer_with_more_sets(shift in 0u32..14, extra in 1u32..4) {
            let mut a = SimConfig::testbed();
            a.cache.l3.sets = 1 << shift;
            let mut b = a.clone();
            b.cache.l3.sets = 1 << (shift + extra);
            prop_assert!(spatial_accuracy(AttackVector::L3PrimeProbe, &b) <= spatial_accuracy(AttackVector::L3PrimeProbe, &a));
        }
    }
}
