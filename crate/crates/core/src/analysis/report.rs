// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

/// Side-effect label: `none` without any AEX, `modest` under 2x
/// slowdown, `high` from 2x up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Band {
    None,
    Modest,
    High,
}

pub fn band(aex_count: u64, slowdown: f64) -> Band {
    if aex_count == 0 {
        Band::None
    } else if slowdown < 2.0 {
        Band::Modest
    } else {
        Band::High
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackReport {
    pub recovered_secret: Option<String>,
    pub bit_error_rate: Option<f64>,
    pub coverage: Option<f64>,
    pub precision: Option<f64>,
    /// Attack-induced AEX: page faults plus shootdown IPIs.
    pub aex_count: u64,
    pub slowdown: f64,
    pub spatial_granularity_bytes: u64,
    pub band: Band,
}

impl AttackReport {
    pub fn new(aex_count: u64, slowdown: f64, spatial_granularity_bytes: u64) -> Self {
        AttackReport {
            recovered_secret: None,
            bit_error_rate: None,
            coverage: None,
            precision: None,
            aex_count,
            slowdown,
            spatial_granularity_bytes,
            band: band(aex_count, slowdown),
        }
    }
}

/// Bits as a string of '0'/'1'.
pub fn bit_string(bits: &[bool]) -> String {
    bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn band_edges() {
        assert_eq!(band(0, 5.0), Band::None);
        assert_eq!(band(1, 1.99), Band::Modest);
        assert_eq!(band(1, 2.0), Band::High);
    }

    #[test]
    fn bits_render() {
        assert_eq!(bit_string(&[true, false, true]), "101");
    }
}
